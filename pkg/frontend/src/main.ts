/**
 * Cockpit wiring: URL query -> client -> model -> canvas, with keyboard
 * and slider input feeding human commands at a fixed cadence.
 *
 * Open as ?ws=ws://127.0.0.1:8571 (defaults to that address).
 */

import { CockpitClient } from "./client";
import { SteeringInput } from "./input";
import { CockpitModel } from "./model";
import { drawScene } from "./render";

const COMMAND_INTERVAL_MS = 100; // zero-order hold refresh toward the server

function requireElement<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing #${id} in index.html`);
  return el as T;
}

function start(): void {
  const canvas = requireElement<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error("2d canvas context unavailable");
  const slider = requireElement<HTMLInputElement>("steer");
  const kappaBox = requireElement<HTMLInputElement>("kappa");

  const url = new URLSearchParams(window.location.search).get("ws")
    ?? "ws://127.0.0.1:8571";
  const model = new CockpitModel();
  let input = new SteeringInput(0.2);

  const client = new CockpitClient(url, {
    onMessage: (msg) => {
      model.apply(msg);
      if (msg.type === "hello") {
        input = new SteeringInput(msg.command_limit);
        slider.min = String(-msg.command_limit);
        slider.max = String(msg.command_limit);
        slider.step = String(msg.command_limit / 50);
        kappaBox.value = String(msg.kappa);
      }
    },
    onStatus: (status) => model.setConnection(status),
    onProtocolError: (error) => model.apply({ type: "error", message: error.message }),
  });

  window.addEventListener("keydown", (e) => {
    if (e.repeat) return;
    input.keyDown(e.key);
  });
  window.addEventListener("keyup", (e) => input.keyUp(e.key));
  slider.addEventListener("input", () => input.setFromSlider(Number(slider.value)));
  requireElement<HTMLButtonElement>("start").addEventListener("click", () => client.sendControl("start"));
  requireElement<HTMLButtonElement>("stop").addEventListener("click", () => client.sendControl("stop"));
  requireElement<HTMLButtonElement>("reset").addEventListener("click", () => client.sendControl("reset"));
  kappaBox.addEventListener("change", () => {
    const kappa = Number(kappaBox.value);
    if (Number.isFinite(kappa) && kappa >= 0) client.sendControl("start", { kappa });
  });

  let lastFrame = performance.now();
  function animate(now: number): void {
    input.tick((now - lastFrame) / 1000);
    lastFrame = now;
    slider.value = String(input.value());
    drawScene(ctx!, model, canvas.width, canvas.height);
    requestAnimationFrame(animate);
  }
  requestAnimationFrame(animate);

  setInterval(() => {
    client.sendCommand(input.value());
  }, COMMAND_INTERVAL_MS);
}

start();

/**
 * Canvas drawing. The world-to-screen fit is a pure function (tested);
 * everything else is straightforward immediate-mode drawing of the model
 * snapshot: track centerline, vehicle trail, pose arrow, sigma gauge and
 * strip chart, numeric readouts.
 */

import { CockpitModel } from "./model";

export interface Transform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Fit a world bounding box into a viewport, preserving aspect, 10% margin.
 * Screen y grows downward, world y upward, so the y axis flips. */
export function fitTransform(
  bounds: { minX: number; maxX: number; minY: number; maxY: number },
  viewport: { width: number; height: number },
): Transform {
  const spanX = Math.max(bounds.maxX - bounds.minX, 1e-9);
  const spanY = Math.max(bounds.maxY - bounds.minY, 1e-9);
  const scale = 0.9 * Math.min(viewport.width / spanX, viewport.height / spanY);
  const midX = (bounds.minX + bounds.maxX) / 2;
  const midY = (bounds.minY + bounds.maxY) / 2;
  return {
    scale,
    offsetX: viewport.width / 2 - scale * midX,
    offsetY: viewport.height / 2 + scale * midY,
  };
}

export function toScreen(t: Transform, x: number, y: number): [number, number] {
  return [t.scale * x + t.offsetX, -t.scale * y + t.offsetY];
}

export function trackBounds(track: Array<[number, number]>): {
  minX: number; maxX: number; minY: number; maxY: number;
} {
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const [x, y] of track) {
    minX = Math.min(minX, x); maxX = Math.max(maxX, x);
    minY = Math.min(minY, y); maxY = Math.max(maxY, y);
  }
  return { minX, maxX, minY, maxY };
}

function polyline(ctx: CanvasRenderingContext2D, t: Transform,
                  points: Array<[number, number]>): void {
  ctx.beginPath();
  points.forEach(([x, y], i) => {
    const [sx, sy] = toScreen(t, x, y);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.stroke();
}

export function drawScene(ctx: CanvasRenderingContext2D, model: CockpitModel,
                          width: number, height: number): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);

  const chartHeight = 70;
  const mapHeight = height - chartHeight;
  const snap = model.snapshot();

  if (snap.hello !== null && snap.hello.track.length >= 2) {
    const t = fitTransform(trackBounds(snap.hello.track),
                           { width, height: mapHeight });
    ctx.strokeStyle = "#3d4a5c";
    ctx.lineWidth = 5;
    polyline(ctx, t, snap.hello.track);

    const trail = model.trail();
    if (trail.length >= 2) {
      ctx.strokeStyle = "#4cc38a";
      ctx.lineWidth = 2;
      polyline(ctx, t, trail);
    }

    const latest = snap.latest;
    if (latest !== null) {
      const [sx, sy] = toScreen(t, latest.x, latest.y);
      const arrow = 12;
      ctx.fillStyle = latest.sigma > 0.5 ? "#e5484d" : "#f5d90a";
      ctx.beginPath();
      ctx.moveTo(sx + arrow * Math.cos(-latest.heading), sy + arrow * Math.sin(-latest.heading));
      ctx.lineTo(sx + 6 * Math.cos(-latest.heading + 2.5), sy + 6 * Math.sin(-latest.heading + 2.5));
      ctx.lineTo(sx + 6 * Math.cos(-latest.heading - 2.5), sy + 6 * Math.sin(-latest.heading - 2.5));
      ctx.closePath();
      ctx.fill();
    }
  }

  // sigma strip chart along the bottom
  const history = model.sigmaHistory();
  ctx.fillStyle = "#161d27";
  ctx.fillRect(0, mapHeight, width, chartHeight);
  ctx.strokeStyle = "#8ab4f8";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  history.forEach((sigma, i) => {
    const x = (i / Math.max(history.length - 1, 1)) * width;
    const y = mapHeight + chartHeight - sigma * (chartHeight - 8) - 4;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();

  const latest = snap.latest;
  ctx.fillStyle = "#d7dde4";
  ctx.font = "13px ui-monospace, monospace";
  const status = `${snap.connection}  ${snap.sessionRunning ? "running" : "stopped"}` +
    (snap.identityViolations > 0 ? `  identity violations: ${snap.identityViolations}` : "");
  ctx.fillText(status, 10, 18);
  if (latest !== null) {
    ctx.fillText(
      `tick ${latest.tick}  u_net ${latest.u_net.toFixed(3)}  ` +
      `u_human ${latest.u_human.toFixed(3)}  u_blended ${latest.u_blended.toFixed(3)}`,
      10, 36);
    ctx.fillText(
      `variance ${latest.variance.toExponential(2)}  sigma ${latest.sigma.toFixed(3)}  ` +
      `cross track ${latest.cross_track.toFixed(2)} m  off course x${snap.leftCorridorCount}`,
      10, 54);
  }
  if (snap.lastError !== null) {
    ctx.fillStyle = "#e5484d";
    ctx.fillText(`server error: ${snap.lastError}`, 10, 72);
  }
}

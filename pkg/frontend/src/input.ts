/**
 * Steering input state machine.
 *
 * Holding left/right ramps the command toward the limit; releasing decays
 * it back to zero, so a tap nudges and a hold commits. A slider write
 * overrides the ramp until the next key press. Pure logic: the DOM wiring
 * in main.ts only forwards key names and slider values.
 */

export class SteeringInput {
  private value_ = 0;
  private left = false;
  private right = false;
  private fromSlider = false;

  constructor(
    readonly limit: number,
    readonly rampPerSecond: number = 2.0 * limit,
    readonly decayPerSecond: number = 4.0 * limit,
  ) {
    if (!(limit > 0)) throw new RangeError(`limit must be positive, got ${limit}`);
  }

  /** Positive commands turn left (counterclockwise), matching the track's
   * curvature sign. */
  keyDown(key: string): void {
    if (key === "ArrowLeft" || key === "a") {
      this.left = true;
      this.fromSlider = false;
    } else if (key === "ArrowRight" || key === "d") {
      this.right = true;
      this.fromSlider = false;
    }
  }

  keyUp(key: string): void {
    if (key === "ArrowLeft" || key === "a") this.left = false;
    else if (key === "ArrowRight" || key === "d") this.right = false;
  }

  setFromSlider(value: number): void {
    this.fromSlider = true;
    this.value_ = this.clamp(value);
  }

  /** Advance the ramp/decay by dt seconds. */
  tick(dt: number): void {
    if (!(dt >= 0)) throw new RangeError(`dt must be >= 0, got ${dt}`);
    if (this.fromSlider) return; // held until a key press takes over
    const direction = (this.left ? 1 : 0) - (this.right ? 1 : 0);
    if (direction !== 0) {
      this.value_ = this.clamp(this.value_ + direction * this.rampPerSecond * dt);
    } else if (this.value_ !== 0) {
      const step = this.decayPerSecond * dt;
      this.value_ = Math.abs(this.value_) <= step ? 0 : this.value_ - Math.sign(this.value_) * step;
    }
  }

  value(): number {
    return this.value_;
  }

  private clamp(v: number): number {
    return Math.min(Math.max(v, -this.limit), this.limit);
  }
}

/** Console state: latest server-acknowledged snapshot, selection, the
 * optimistic drag ghost, the command echo log, and connection status.
 * Rendering reads only this; the ghost is drawn distinctly and retired as
 * soon as the server's snapshots reflect the commanded position. */

import { CommandAck, Frame, Hello, Snapshot } from "./protocol.js";

export type Connection = "connecting" | "live" | "closed";

export interface EchoEntry {
  ok: boolean;
  message: string;
  detail: string;
}

export interface Ghost {
  id: number;
  position: number[];
}

export class ViewState {
  hello: Hello | null = null;
  snapshot: Snapshot | null = null;
  connection: Connection = "connecting";
  selected: number | null = null;
  ghost: Ghost | null = null;
  echo: EchoEntry[] = [];
  framesDropped = 0;
  private lastSeq = -1;

  applyFrame(frame: Frame | null): void {
    if (frame === null) {
      this.framesDropped += 1;
      return;
    }
    if (frame.seq <= this.lastSeq && frame.type === "snapshot") {
      return; // stale snapshot, latest already shown
    }
    this.lastSeq = Math.max(this.lastSeq, frame.seq);
    switch (frame.type) {
      case "hello":
        this.hello = frame.payload;
        this.connection = "live";
        break;
      case "snapshot":
        this.snapshot = frame.payload;
        this.retireGhost();
        break;
      case "command":
      case "error":
        this.pushEcho(frame.payload, frame.type === "error");
        break;
    }
  }

  private pushEcho(ack: CommandAck, isError: boolean): void {
    const echoed = ack.echo ?? {};
    this.echo.push({
      ok: ack.ok && !isError,
      message: ack.message,
      detail: JSON.stringify(echoed),
    });
    if (this.echo.length > 50) {
      this.echo.shift();
    }
  }

  beginDrag(id: number): void {
    this.selected = id;
  }

  moveGhost(position: number[]): void {
    if (this.selected !== null) {
      this.ghost = { id: this.selected, position };
    }
  }

  endDrag(): void {
    this.selected = null;
  }

  /** Ghost disappears once the acknowledged obstacle is within a hair of
   * the commanded point (or the obstacle vanished). */
  private retireGhost(): void {
    if (!this.ghost || !this.snapshot) return;
    const ob = this.snapshot.obstacles.find((o) => o.id === this.ghost!.id);
    if (!ob) {
      this.ghost = null;
      return;
    }
    const dist = Math.hypot(
      ...ob.center.map((c, i) => c - this.ghost!.position[i]));
    if (dist < 1e-3 && this.selected === null) {
      this.ghost = null;
    }
  }

  disconnected(): void {
    this.connection = "closed";
  }
}

/** Websocket wiring with reconnect. All inbound frames funnel through
 * ViewState; outbound messages are plain JSON strings from protocol.ts. */

import { parseFrame } from "./protocol.js";
import { ViewState } from "./state.js";

export class SessionClient {
  private ws: WebSocket | null = null;
  private retryMs = 500;
  private closedByUser = false;

  constructor(
    private readonly url: string,
    readonly state: ViewState,
    private readonly onChange: () => void,
  ) {}

  connect(): void {
    this.state.connection = "connecting";
    this.onChange();
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onmessage = (ev) => {
      this.state.applyFrame(parseFrame(String(ev.data)));
      this.onChange();
    };
    ws.onopen = () => {
      this.retryMs = 500;
    };
    ws.onclose = () => {
      this.state.disconnected();
      this.onChange();
      if (!this.closedByUser) {
        setTimeout(() => this.connect(), this.retryMs);
        this.retryMs = Math.min(this.retryMs * 2, 5000);
      }
    };
    ws.onerror = () => {
      ws.close();
    };
  }

  send(json: string): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(json);
    }
  }

  close(): void {
    this.closedByUser = true;
    this.ws?.close();
  }
}

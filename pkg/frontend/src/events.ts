export interface EventHandlers {
  onSnapshot: (version: number) => void;
}

// Minimal push-channel client: parses snapshot announcements, ignores
// pings, reconnects with a fixed backoff.
export function connectEvents(url: string, handlers: EventHandlers,
                              backoffMs = 2000): () => void {
  let socket: WebSocket | null = null;
  let closed = false;

  const open = () => {
    if (closed) return;
    socket = new WebSocket(url);
    socket.onmessage = (event) => {
      try {
        const msg = JSON.parse(event.data as string);
        if (msg.type === "snapshot" && typeof msg.version === "number") {
          handlers.onSnapshot(msg.version);
        }
      } catch {
        // ignore non-JSON frames
      }
    };
    socket.onclose = () => {
      if (!closed) setTimeout(open, backoffMs);
    };
  };

  open();
  return () => {
    closed = true;
    socket?.close();
  };
}

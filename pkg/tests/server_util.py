"""Reference HTTP server speaking the external-classifier wire protocol.

Test-only: wraps any backend so the client in the package can be
exercised against a live endpoint.
"""

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np


@contextmanager
def serve_backend(backend, mangle=None):
    """Serve `backend` on an ephemeral port; yields the base URL.

    `mangle(payload_dict) -> dict` can corrupt responses for error-path
    tests.
    """

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            texts = body["texts"]
            logits = [backend.raw_logits(tuple(t.split())) for t in texts]
            if self.path == "/logits":
                payload = {"logits": [[float(x) for x in row] for row in logits]}
            elif self.path == "/labels":
                payload = {"labels": [int(np.argmax(row)) for row in logits]}
            else:
                self.send_error(404)
                return
            if mangle is not None:
                payload = mangle(payload)
            data = json.dumps(payload).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join(timeout=5)

"""
Scripted chat-completion server for planner tests.

A script is a JSON file of substring rules::

    {
      "rules": [
        {"match": "observed nothing", "completion": "explore"},
        {"match": "observed yellow key",
         "completion": "go to the yellow key, pick up the yellow key"}
      ],
      "default": "explore"
    }

Rules are tried in order against the last user message, case-insensitively.
The first match answers; unmatched prompts get ``default``. Every request is
kept in ``app.state.requests`` and, when a log path is given, appended to a
JSON-lines file.
"""

import json
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import uvicorn
from fastapi import FastAPI, HTTPException

from .errors import ConfigurationError, ServerError

log = logging.getLogger(__name__)

DEFAULT_COMPLETION = "explore"


@dataclass
class MockScript:
    rules: List[Tuple[str, str]] = field(default_factory=list)
    default: str = DEFAULT_COMPLETION

    def answer(self, prompt):
        lowered = prompt.lower()
        for pattern, completion in self.rules:
            if pattern.lower() in lowered:
                return completion
        return self.default


def parse_script(doc, source="<script>"):
    if not isinstance(doc, dict):
        raise ConfigurationError("{}: expected a JSON object".format(source))
    rules = []
    for n, rule in enumerate(doc.get("rules", [])):
        if not isinstance(rule, dict) or not isinstance(rule.get("match"), str) or not isinstance(
            rule.get("completion"), str
        ):
            raise ConfigurationError(
                "{}: rule {} needs string fields 'match' and 'completion'".format(source, n)
            )
        rules.append((rule["match"], rule["completion"]))
    default = doc.get("default", DEFAULT_COMPLETION)
    if not isinstance(default, str):
        raise ConfigurationError("{}: field 'default' must be a string".format(source))
    return MockScript(rules, default)


def load_script(path):
    """
    :raises ConfigurationError: If the file is unreadable or malformed.
    :rtype: MockScript
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigurationError("{}: cannot read script: {}".format(path, e.strerror or e)) from e
    except json.JSONDecodeError as e:
        raise ConfigurationError("{}:{}:{}: {}".format(path, e.lineno, e.colno, e.msg)) from None
    return parse_script(doc, str(path))


def _last_user_message(body):
    messages = body.get("messages")
    if not isinstance(messages, list) or not messages:
        raise HTTPException(status_code=400, detail="field 'messages' must be a non-empty list")
    for message in reversed(messages):
        if isinstance(message, dict) and message.get("role") == "user":
            return str(message.get("content", ""))
    raise HTTPException(status_code=400, detail="no user message")


def create_app(script, log_path=None):
    """
    Build the FastAPI app answering ``POST /v1/chat/completions``.

    :param script: Rules and default completion.
    :type script: MockScript
    :param log_path: Optional JSON-lines file receiving one record per request.
    """
    app = FastAPI(title="askgrid mock planner")
    app.state.script = script
    app.state.requests = []
    app.state.lock = threading.Lock()
    log_file = Path(log_path) if log_path is not None else None

    def complete(body: dict):
        prompt = _last_user_message(body)
        completion = app.state.script.answer(prompt)
        with app.state.lock:
            n = len(app.state.requests)
            record = {
                "n": n,
                "model": body.get("model"),
                "prompt": prompt,
                "completion": completion,
            }
            app.state.requests.append(record)
            if log_file is not None:
                with open(log_file, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")
        log.debug("Request %d answered with %r", n, completion)
        return {
            "id": "chatcmpl-mock-{}".format(n),
            "object": "chat.completion",
            "created": int(time.time()),
            "model": body.get("model") or "mock",
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": completion},
                    "finish_reason": "stop",
                }
            ],
            "usage": {
                "prompt_tokens": len(prompt.split()),
                "completion_tokens": len(completion.split()),
            },
        }

    app.post("/v1/chat/completions")(complete)
    app.post("/chat/completions")(complete)

    @app.get("/v1/requests")
    def requests_seen():
        with app.state.lock:
            return {"count": len(app.state.requests), "requests": list(app.state.requests)}

    return app


def check_port(host, port):
    """:raises ServerError: If ``port`` cannot be bound on ``host``."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        try:
            sock.bind((host, port))
        except OSError as e:
            raise ServerError(
                "Port {} on {} is busy: {}".format(port, host, e.strerror or e)
            ) from e


def mock_llm_server(script_path, port=8000, host="127.0.0.1", log_path=None):
    """
    Serve a script until interrupted.

    Example::

        mock_llm_server("configs/mock_planner.json", port=8000, log_path="requests.jsonl")

    :raises ConfigurationError: If the script is malformed.
    :raises ServerError: If the port is busy.
    """
    script = load_script(script_path)
    check_port(host, port)
    app = create_app(script, log_path)
    log.info("Mock planner on http://%s:%d/v1 with %d rules", host, port, len(script.rules))
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return app

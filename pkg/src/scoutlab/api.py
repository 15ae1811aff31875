"""HTTP control/status API for supervision.

Read endpoints
  GET /v1/status                     campaign summary (workers, budget, best)
  GET /v1/findings?stage=&limit=&after=   id-ordered listing with a cursor
  GET /v1/findings/{id}              full record including evidence logs
  GET /v1/stats/funnel               funnel statistics document
  GET /v1/timeline                   best-metric step series
  GET /v1/events?after_seq=&wait=    incremental events (long-poll via wait seconds)

Control endpoints
  GET  /v1/approvals                 pending promotion approvals
  POST /v1/approvals/{id}            body {"decision","reviewer","note"?}
  POST /v1/control/pause|resume|stop idempotent; applied at cycle boundaries

All payloads are JSON with schema_version 1. Errors: 404 unknown id, 409
already resolved / not pending, 400 malformed body. Reads and the event
stream come from the same folded state under one lock, so a listing never
shows a stage whose promotion event is not already visible.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

from scoutlab import analysis
from scoutlab.errors import (
    AlreadyResolved,
    BudgetExhausted,
    ConfigInvalid,
    NotPending,
    UnknownId,
)
from scoutlab.orchestrator import CampaignEngine, CampaignState, replay_campaign_state
from scoutlab.records import SCHEMA_VERSION, Stage

MAX_EVENT_WAIT_SECONDS = 25.0
DEFAULT_LIST_LIMIT = 100


class LiveSource:
    """Serves a running engine; all reads go through the campaign-log lock."""

    def __init__(self, engine: CampaignEngine):
        self.engine = engine

    def status(self) -> dict:
        paused = self.engine.paused

        def build(state: CampaignState) -> dict:
            return _status_payload(state, live=True, paused=paused)

        return self.engine.log.with_state(build)

    def findings(self, stage: Optional[str], limit: int, after: str) -> dict:
        def build(state: CampaignState) -> dict:
            return _findings_payload(state, stage, limit, after)

        return self.engine.log.with_state(build)

    def finding(self, finding_id: str) -> Optional[dict]:
        def build(state: CampaignState):
            if finding_id not in state.memory:
                return None
            return state.memory.get(finding_id).to_dict()

        return self.engine.log.with_state(build)

    def funnel(self) -> dict:
        return analysis.funnel_stats(self.engine.log.all_events()).to_dict()

    def timeline(self) -> list[dict]:
        return analysis.timeline_steps(self.engine.log.all_events())

    def events_after(self, after_seq: int, wait: float) -> list[dict]:
        return self.engine.log.events_after(after_seq, wait_seconds=wait)

    def approvals(self) -> list[dict]:
        return self.engine.list_pending()

    def resolve(self, finding_id: str, decision: str, reviewer: str, note: str) -> dict:
        return self.engine.resolve(finding_id, decision, reviewer, note)

    def control(self, action: str) -> dict:
        if action == "pause":
            changed = self.engine.pause()
        elif action == "resume":
            changed = self.engine.resume()
        else:
            changed = self.engine.stop()
        return {"action": action, "changed": changed, "paused": self.engine.paused}

    def shutdown(self):
        self.engine.stop()
        self.engine.join()
        self.engine.log.close()


class StaticSource:
    """Serves a finished campaign log read-only; controls are no-ops."""

    def __init__(self, events: list[dict]):
        self.events = events
        self.state = replay_campaign_state(events)
        self._lock = threading.Lock()

    def status(self) -> dict:
        with self._lock:
            return _status_payload(self.state, live=False, paused=False)

    def findings(self, stage, limit, after) -> dict:
        with self._lock:
            return _findings_payload(self.state, stage, limit, after)

    def finding(self, finding_id):
        with self._lock:
            if finding_id not in self.state.memory:
                return None
            return self.state.memory.get(finding_id).to_dict()

    def funnel(self) -> dict:
        return analysis.funnel_stats(self.events).to_dict()

    def timeline(self) -> list[dict]:
        return analysis.timeline_steps(self.events)

    def events_after(self, after_seq: int, wait: float) -> list[dict]:
        return [ev for ev in self.events if ev.get("seq", 0) > after_seq]

    def approvals(self) -> list[dict]:
        with self._lock:
            return sorted(
                self.state.pending_approvals.values(), key=lambda d: d["finding_id"]
            )

    def resolve(self, finding_id, decision, reviewer, note):
        with self._lock:
            if any(
                key.startswith(f"{finding_id}:") for key in self.state.resolved_approvals
            ):
                raise AlreadyResolved(finding_id)
            if finding_id in self.state.pending_approvals:
                raise NotPending("static log is read-only")
            raise UnknownId(finding_id)

    def control(self, action: str) -> dict:
        return {"action": action, "changed": False, "paused": False}

    def shutdown(self):
        pass


def _status_payload(state: CampaignState, live: bool, paused: bool) -> dict:
    return {
        "live": live,
        "paused": paused,
        "started": state.started,
        "finished": state.finished,
        "finish_reason": state.finish_reason,
        "seq": state.seq,
        "progress_count": state.progress_count(),
        "best_metric": state.best_metric,
        "best_finding_id": state.best_finding_id,
        "budget_spent": dict(state.spent),
        "baseline": state.baseline.to_dict() if state.baseline else None,
        "workers": [
            {
                "worker_id": v.worker_id,
                "limitation": v.limitation,
                "cycle": v.cycle,
                "status": v.status,
                "best_metric": v.best_metric,
                "sync_epoch": v.sync_epoch,
            }
            for _, v in sorted(state.workers.items())
        ],
        "pending_approvals": len(state.pending_approvals),
        "record_count": len(state.memory),
    }


def _findings_payload(state: CampaignState, stage, limit, after) -> dict:
    stage_filter = Stage.from_wire(stage) if stage else None
    rows = []
    for record in state.memory.records(stage=stage_filter):
        if after and record.id <= after:
            continue
        rows.append(record.to_dict())
        if len(rows) >= limit:
            break
    return {
        "findings": rows,
        "next_after": rows[-1]["id"] if len(rows) >= limit else None,
    }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "scoutlab"

    # -- plumbing ---------------------------------------------------------------

    @property
    def source(self):
        return self.server.source  # type: ignore[attr-defined]

    def log_message(self, *args):
        pass

    def _send(self, status: int, payload: dict):
        body = json.dumps({"schema_version": SCHEMA_VERSION, **payload}).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, code: str, message: str):
        self._send(status, {"error": code, "message": message})

    def _read_json_body(self) -> Optional[dict]:
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b""
            payload = json.loads(raw.decode("utf-8")) if raw else {}
        except (ValueError, UnicodeDecodeError):
            return None
        return payload if isinstance(payload, dict) else None

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- routes -------------------------------------------------------------------

    def do_GET(self):
        url = urlparse(self.path)
        query = parse_qs(url.query)
        path = url.path.rstrip("/") or "/"
        try:
            if path == "/v1/status":
                self._send(200, {"status": self.source.status()})
            elif path == "/v1/findings":
                stage = query.get("stage", [None])[0]
                limit = int(query.get("limit", [DEFAULT_LIST_LIMIT])[0])
                after = query.get("after", [""])[0]
                self._send(200, self.source.findings(stage, limit, after))
            elif path.startswith("/v1/findings/"):
                finding_id = path[len("/v1/findings/"):]
                record = self.source.finding(finding_id)
                if record is None:
                    self._error(404, "UnknownId", finding_id)
                else:
                    self._send(200, {"finding": record})
            elif path == "/v1/stats/funnel":
                self._send(200, {"funnel": self.source.funnel()})
            elif path == "/v1/timeline":
                self._send(200, {"steps": self.source.timeline()})
            elif path == "/v1/events":
                after_seq = int(query.get("after_seq", ["0"])[0])
                wait = min(
                    float(query.get("wait", ["0"])[0]), MAX_EVENT_WAIT_SECONDS
                )
                events = self.source.events_after(after_seq, wait)
                last = events[-1]["seq"] if events else after_seq
                self._send(200, {"events": events, "last_seq": last})
            elif path == "/v1/approvals":
                self._send(200, {"approvals": self.source.approvals()})
            else:
                self._error(404, "NotFound", path)
        except ValueError as exc:
            self._error(400, "MalformedQuery", str(exc))
        except Exception as exc:  # surface as a 500 payload, keep serving
            self._error(500, type(exc).__name__, str(exc))

    def do_POST(self):
        url = urlparse(self.path)
        path = url.path.rstrip("/")
        try:
            if path.startswith("/v1/approvals/"):
                finding_id = path[len("/v1/approvals/"):]
                body = self._read_json_body()
                if body is None:
                    return self._error(400, "MalformedBody", "body must be a JSON object")
                decision = body.get("decision", "")
                reviewer = body.get("reviewer", "")
                note = body.get("note", "")
                try:
                    result = self.source.resolve(finding_id, decision, reviewer, note)
                except UnknownId as exc:
                    return self._error(404, "UnknownId", str(exc))
                except AlreadyResolved as exc:
                    return self._error(409, "AlreadyResolved", str(exc))
                except NotPending as exc:
                    return self._error(409, "NotPending", str(exc))
                except BudgetExhausted as exc:
                    return self._error(409, "BudgetExhausted", str(exc))
                except ConfigInvalid as exc:
                    return self._error(400, "MalformedBody", str(exc))
                self._send(200, {"resolved": result})
            elif path in ("/v1/control/pause", "/v1/control/resume", "/v1/control/stop"):
                action = path.rsplit("/", 1)[-1]
                self._send(200, {"control": self.source.control(action)})
            else:
                self._error(404, "NotFound", path)
        except Exception as exc:
            self._error(500, type(exc).__name__, str(exc))


class ControlApiServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, source):
        super().__init__(addr, _Handler)
        self.source = source

    def shutdown_campaign(self):
        self.source.shutdown()
        self.shutdown()


def serve_campaign(
    addr: tuple[str, int],
    engine: Optional[CampaignEngine] = None,
    events: Optional[list[dict]] = None,
) -> ControlApiServer:
    """Build a server for a live engine or a static log."""
    if engine is not None:
        source = LiveSource(engine)
    elif events is not None:
        source = StaticSource(events)
    else:
        raise ConfigInvalid("serve_campaign needs an engine or an event list")
    return ControlApiServer(addr, source)

"""JSON-over-HTTP oracle client.

One endpoint per request kind (``POST <base>/invoke`` etc.). Bodies carry
``format_version``, ``kind``, and a ``payload``; responses echo the kind and
add ``cost_units``. Transport failures and deadline misses are retried up to
``max_retries`` times and then surface as :class:`OracleTransportError`,
which the engine treats as an empty response. Contract breaches (unknown
ids, out-of-range scores, malformed JSON) raise
:class:`OracleProtocolError` immediately.

Configuration can come from the environment: ``SKILLGRAPH_ORACLE_URL``,
``SKILLGRAPH_ORACLE_DEADLINE`` (seconds), ``SKILLGRAPH_ORACLE_RETRIES``.
"""

from __future__ import annotations

import os

import requests

from .errors import OracleProtocolError, OracleTransportError
from .memory import AtomicAction
from .oracle import (
    FORMAT_VERSION,
    AugmentRequest,
    EvaluateRequest,
    InvokeRequest,
    Oracle,
    RefineDraft,
    RefineRequest,
    check_augment_response,
    check_evaluate_response,
    check_invoke_response,
    check_refine_response,
)

ENV_URL = "SKILLGRAPH_ORACLE_URL"
ENV_DEADLINE = "SKILLGRAPH_ORACLE_DEADLINE"
ENV_RETRIES = "SKILLGRAPH_ORACLE_RETRIES"


class RemoteOracle(Oracle):
    def __init__(self, base_url: str | None = None, deadline: float | None = None,
                 max_retries: int | None = None, session: requests.Session | None = None):
        super().__init__()
        self.base_url = (base_url or os.environ.get(ENV_URL, "")).rstrip("/")
        if not self.base_url:
            raise OracleProtocolError(f"no oracle URL configured (set {ENV_URL})")
        self.deadline = deadline if deadline is not None else float(
            os.environ.get(ENV_DEADLINE, "5.0"))
        self.max_retries = max_retries if max_retries is not None else int(
            os.environ.get(ENV_RETRIES, "2"))
        self.session = session or requests.Session()

    def _post(self, kind: str, payload: dict) -> dict:
        body = {"format_version": FORMAT_VERSION, "kind": kind, "payload": payload}
        url = f"{self.base_url}/{kind}"
        last_error: Exception | None = None
        for _ in range(self.max_retries + 1):
            try:
                response = self.session.post(url, json=body, timeout=self.deadline)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = OracleTransportError(f"{kind}: server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise OracleProtocolError(f"{kind}: unexpected status {response.status_code}")
            try:
                data = response.json()
            except ValueError as exc:
                raise OracleProtocolError(f"{kind}: response is not JSON") from exc
            return self._unwrap(kind, data)
        raise OracleTransportError(f"{kind}: transport failed after retries") from last_error

    def _unwrap(self, kind: str, data: dict) -> dict:
        if not isinstance(data, dict):
            raise OracleProtocolError(f"{kind}: response body must be an object")
        if data.get("format_version") != FORMAT_VERSION:
            raise OracleProtocolError(
                f"{kind}: unsupported format_version {data.get('format_version')!r}"
            )
        if data.get("kind") != kind:
            raise OracleProtocolError(f"{kind}: response kind mismatch {data.get('kind')!r}")
        payload = data.get("payload")
        if not isinstance(payload, dict):
            raise OracleProtocolError(f"{kind}: missing payload")
        cost = data.get("cost_units", 1)
        if not isinstance(cost, int) or cost < 0:
            raise OracleProtocolError(f"{kind}: bad cost_units {cost!r}")
        self._charge(cost)
        return payload

    def invoke(self, request: InvokeRequest) -> list[int]:
        payload = self._post("invoke", request.to_payload())
        ids = payload.get("skill_ids")
        if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
            raise OracleProtocolError("invoke: payload.skill_ids must be a list of ints")
        return check_invoke_response(request, ids)

    def augment(self, request: AugmentRequest) -> AtomicAction | None:
        payload = self._post("augment", request.to_payload())
        raw = payload.get("action")
        if raw is None:
            return None
        try:
            action = AtomicAction.from_dict(raw)
        except (KeyError, ValueError, TypeError) as exc:
            raise OracleProtocolError(f"augment: malformed action {raw!r}") from exc
        return check_augment_response(request, action)

    def refine(self, request: RefineRequest) -> RefineDraft:
        payload = self._post("refine", request.to_payload())
        raw_actions = payload.get("actions")
        descriptor = payload.get("descriptor", "")
        if not isinstance(raw_actions, list):
            raise OracleProtocolError("refine: payload.actions must be a list")
        try:
            actions = tuple(AtomicAction.from_dict(a) for a in raw_actions)
        except (KeyError, ValueError, TypeError) as exc:
            raise OracleProtocolError("refine: malformed action list") from exc
        return check_refine_response(request, RefineDraft(actions, str(descriptor)))

    def evaluate(self, request: EvaluateRequest) -> tuple[float, float]:
        payload = self._post("evaluate", request.to_payload())
        try:
            scores = (float(payload["progress"]), float(payload["semantics"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise OracleProtocolError("evaluate: payload needs numeric progress/semantics") from exc
        return check_evaluate_response(scores)

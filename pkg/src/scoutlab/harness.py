"""Evaluation harness: runs the expensive true-value measurement.

Real evaluations duplicate a baseline repository into a fresh sandbox
directory, run an argument-vector command there with a filtered
environment, capture all output to `<evaluation-id>.log`, and parse the
task metric from the output (last per-line regex match wins). Failures
surface as verdicts, never exceptions: nonzero exit or missing metric ->
implementation_error, wall-clock overrun -> timeout (process tree killed).

A confirmed improvement requires an independent re-execution within a
relative tolerance (verify_rerun). Synthetic evaluations read the exact
landscape height instead and can inject implementation errors with a
configured probability to model realistic failure mixes.
"""

from __future__ import annotations

import hashlib
import math
import os
import random
import re
import shutil
import signal
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Optional

from scoutlab.errors import InvariantViolation, MissingLatentPoint, StageViolation
from scoutlab.landscape import SyntheticConceptSpace
from scoutlab.records import (
    BaselineSpec,
    EvaluationResult,
    FindingRecord,
    Stage,
    Verdict,
    stable_seed,
)

#: Seconds allowed for a timed-out process tree to die before SIGKILL.
TERMINATION_GRACE_SECONDS = 5.0

#: Captured log text is capped to keep records and API payloads bounded.
MAX_LOG_CHARS = 65536

DEFAULT_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR")


@dataclass(frozen=True)
class SandboxSpec:
    """How to run one repository-level evaluation."""

    baseline_repo_path: str
    working_copy_root: str
    command: tuple[str, ...]
    metric_pattern: str
    timeout_seconds: float = 300.0
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST
    keep_sandboxes: bool = False

    def __post_init__(self):
        if self.timeout_seconds <= 0:
            raise InvariantViolation("timeout_seconds must be positive")
        if not self.command:
            raise InvariantViolation("command must be a non-empty argument vector")

    def to_dict(self) -> dict:
        return {
            "baseline_repo_path": self.baseline_repo_path,
            "working_copy_root": self.working_copy_root,
            "command": list(self.command),
            "metric_pattern": self.metric_pattern,
            "timeout_seconds": self.timeout_seconds,
            "env_allowlist": list(self.env_allowlist),
            "keep_sandboxes": self.keep_sandboxes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SandboxSpec":
        return cls(
            baseline_repo_path=d["baseline_repo_path"],
            working_copy_root=d["working_copy_root"],
            command=tuple(d["command"]),
            metric_pattern=d["metric_pattern"],
            timeout_seconds=float(d.get("timeout_seconds", 300.0)),
            env_allowlist=tuple(d.get("env_allowlist", DEFAULT_ENV_ALLOWLIST)),
            keep_sandboxes=bool(d.get("keep_sandboxes", False)),
        )


class EvaluationLimiter:
    """Global cap on concurrent evaluations (one per worker otherwise)."""

    def __init__(self, max_concurrent: int = 0):
        self._sem = threading.Semaphore(max_concurrent) if max_concurrent > 0 else None

    def __enter__(self):
        if self._sem is not None:
            self._sem.acquire()
        return self

    def __exit__(self, *exc):
        if self._sem is not None:
            self._sem.release()
        return False


def hash_tree(root: str) -> str:
    """Content hash of a directory tree (paths + bytes), for isolation checks."""
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            full = os.path.join(dirpath, name)
            rel = os.path.relpath(full, root)
            digest.update(rel.encode("utf-8"))
            with open(full, "rb") as fh:
                while True:
                    chunk = fh.read(65536)
                    if not chunk:
                        break
                    digest.update(chunk)
    return digest.hexdigest()


def _filtered_env(allowlist) -> dict:
    return {k: os.environ[k] for k in allowlist if k in os.environ}


def _tail(text: str) -> str:
    return text[-MAX_LOG_CHARS:] if len(text) > MAX_LOG_CHARS else text


def _extract_metric(pattern: str, text: str) -> Optional[float]:
    """Last per-line match wins; long logs print intermediate metrics."""
    compiled = re.compile(pattern)
    last = None
    for line in text.splitlines():
        m = compiled.search(line)
        if m:
            last = m
    if last is None:
        return None
    try:
        return float(last.group(1) if last.groups() else last.group(0))
    except ValueError:
        return None


def _verdict_for_metric(metric: float, baseline: BaselineSpec) -> Verdict:
    return Verdict.IMPROVEMENT if baseline.improves(metric) else Verdict.NO_IMPROVEMENT


def evaluate(
    finding: FindingRecord,
    sandbox: SandboxSpec,
    baseline: BaselineSpec,
    evaluation_id: str,
    cost_units: float = 0.0,
    limiter: Optional[EvaluationLimiter] = None,
) -> EvaluationResult:
    """Run one sandboxed evaluation of an Implement-stage finding."""
    if finding.stage is not Stage.IMPLEMENT:
        raise StageViolation(f"{finding.id} is at stage {finding.stage.wire}, expected implement")
    if not os.path.isdir(sandbox.baseline_repo_path):
        raise InvariantViolation(f"baseline repo missing: {sandbox.baseline_repo_path}")

    os.makedirs(sandbox.working_copy_root, exist_ok=True)
    workdir = os.path.join(sandbox.working_copy_root, evaluation_id)
    log_path = os.path.join(sandbox.working_copy_root, f"{evaluation_id}.log")
    shutil.copytree(sandbox.baseline_repo_path, workdir)

    limiter = limiter or EvaluationLimiter()
    start = time.monotonic()
    timed_out = False
    output = ""
    returncode: Optional[int] = None
    try:
        with limiter, open(log_path, "w+", encoding="utf-8", errors="replace") as log_fh:
            proc = subprocess.Popen(
                list(sandbox.command),
                cwd=workdir,
                env=_filtered_env(sandbox.env_allowlist),
                stdout=log_fh,
                stderr=subprocess.STDOUT,
                start_new_session=True,
            )
            try:
                returncode = proc.wait(timeout=sandbox.timeout_seconds)
            except subprocess.TimeoutExpired:
                timed_out = True
                _kill_tree(proc)
            log_fh.flush()
            log_fh.seek(0)
            output = log_fh.read()
    finally:
        if not sandbox.keep_sandboxes:
            shutil.rmtree(workdir, ignore_errors=True)
    wall = time.monotonic() - start

    if timed_out:
        return EvaluationResult(
            evaluation_id=evaluation_id,
            finding_id=finding.id,
            verdict=Verdict.TIMEOUT,
            metric_value=None,
            primary_log=_tail(output) + "\n[harness] timeout, process tree terminated",
            wall_seconds=wall,
            cost_units=cost_units,
        )
    if returncode != 0:
        return EvaluationResult(
            evaluation_id=evaluation_id,
            finding_id=finding.id,
            verdict=Verdict.IMPLEMENTATION_ERROR,
            metric_value=None,
            primary_log=_tail(output) + f"\n[harness] exit status {returncode}",
            wall_seconds=wall,
            cost_units=cost_units,
        )
    metric = _extract_metric(sandbox.metric_pattern, output)
    if metric is None or not math.isfinite(metric):
        return EvaluationResult(
            evaluation_id=evaluation_id,
            finding_id=finding.id,
            verdict=Verdict.IMPLEMENTATION_ERROR,
            metric_value=None,
            primary_log=_tail(output) + "\n[harness] metric not found",
            wall_seconds=wall,
            cost_units=cost_units,
        )
    return EvaluationResult(
        evaluation_id=evaluation_id,
        finding_id=finding.id,
        verdict=_verdict_for_metric(metric, baseline),
        metric_value=metric,
        primary_log=_tail(output),
        wall_seconds=wall,
        cost_units=cost_units,
    )


def _kill_tree(proc: subprocess.Popen):
    """SIGTERM the process group, then SIGKILL after the grace window."""
    try:
        os.killpg(proc.pid, signal.SIGTERM)
    except (ProcessLookupError, PermissionError):
        pass
    try:
        proc.wait(timeout=TERMINATION_GRACE_SECONDS)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass
        proc.wait()


def verify_rerun(
    finding: FindingRecord,
    sandbox: SandboxSpec,
    baseline: BaselineSpec,
    first: EvaluationResult,
    evaluation_id: str,
    rel_tolerance: float = 0.01,
    cost_units: float = 0.0,
    limiter: Optional[EvaluationLimiter] = None,
) -> EvaluationResult:
    """Independently re-execute and confirm (or refute) an improvement.

    The re-run happens in a fresh duplicate. A crash, a lost metric, or a
    metric farther than rel_tolerance from the first run yields
    verification_mismatch; otherwise the improvement is confirmed and the
    confirmed result becomes the promotion justification.
    """
    if first.verdict is not Verdict.IMPROVEMENT:
        raise InvariantViolation("verify_rerun requires a first-run Improvement")
    second = evaluate(
        finding, sandbox, baseline, evaluation_id, cost_units=cost_units, limiter=limiter
    )
    return _verification_outcome(finding, first, second, rel_tolerance)


def _verification_outcome(
    finding: FindingRecord,
    first: EvaluationResult,
    second: EvaluationResult,
    rel_tolerance: float,
) -> EvaluationResult:
    assert first.metric_value is not None
    if second.metric_value is None:
        return EvaluationResult(
            evaluation_id=second.evaluation_id,
            finding_id=finding.id,
            verdict=Verdict.VERIFICATION_MISMATCH,
            metric_value=None,
            primary_log=first.primary_log,
            verification_log=_tail(second.primary_log)
            + f"\n[harness] re-run failed with {second.verdict.value}",
            wall_seconds=second.wall_seconds,
            cost_units=second.cost_units,
        )
    drift = abs(second.metric_value - first.metric_value) / abs(first.metric_value)
    if drift > rel_tolerance:
        return EvaluationResult(
            evaluation_id=second.evaluation_id,
            finding_id=finding.id,
            verdict=Verdict.VERIFICATION_MISMATCH,
            metric_value=second.metric_value,
            primary_log=first.primary_log,
            verification_log=_tail(second.primary_log)
            + f"\n[harness] re-run metric {second.metric_value} vs {first.metric_value} "
            f"(relative drift {drift:.4f} > {rel_tolerance})",
            wall_seconds=second.wall_seconds,
            cost_units=second.cost_units,
        )
    return EvaluationResult(
        evaluation_id=second.evaluation_id,
        finding_id=finding.id,
        verdict=Verdict.IMPROVEMENT,
        metric_value=first.metric_value,
        primary_log=first.primary_log,
        verification_log=_tail(second.primary_log) + "\n[harness] re-run confirmed",
        wall_seconds=second.wall_seconds,
        cost_units=second.cost_units,
    )


def evaluate_synthetic(
    finding: FindingRecord,
    space: SyntheticConceptSpace,
    baseline: BaselineSpec,
    evaluation_id: str,
    p_fail: float = 0.0,
    rng: Optional[random.Random] = None,
    cost_units: float = 1.0,
) -> EvaluationResult:
    """Desk-scale oracle: the exact landscape height at the finding's latent point.

    p_fail injects implementation_error verdicts to model realistic failure
    mixes. Wall time is simulated (lognormal draw) so funnel statistics have
    a distribution to summarize; everything is reproducible for the same
    (space, finding, evaluation_id).
    """
    if finding.latent is None:
        raise MissingLatentPoint(finding.id)
    if rng is None:
        rng = random.Random(stable_seed(space.seed, finding.id, evaluation_id))
    wall = rng.lognormvariate(0.0, 0.5)
    if p_fail > 0 and rng.random() < p_fail:
        return EvaluationResult(
            evaluation_id=evaluation_id,
            finding_id=finding.id,
            verdict=Verdict.IMPLEMENTATION_ERROR,
            metric_value=None,
            primary_log="[synthetic] injected implementation failure",
            wall_seconds=wall,
            cost_units=cost_units,
        )
    metric = space.height(finding.latent)
    verdict = _verdict_for_metric(metric, baseline)
    return EvaluationResult(
        evaluation_id=evaluation_id,
        finding_id=finding.id,
        verdict=verdict,
        metric_value=metric,
        primary_log=f"[synthetic] height {metric:.6f} at {finding.latent}",
        wall_seconds=wall,
        cost_units=cost_units,
    )


def verify_rerun_synthetic(
    finding: FindingRecord,
    space: SyntheticConceptSpace,
    baseline: BaselineSpec,
    first: EvaluationResult,
    evaluation_id: str,
    p_fail: float = 0.0,
    rel_tolerance: float = 0.01,
    rng: Optional[random.Random] = None,
    cost_units: float = 1.0,
) -> EvaluationResult:
    """Synthetic analog of verify_rerun; p_fail models false completions."""
    if first.verdict is not Verdict.IMPROVEMENT:
        raise InvariantViolation("verify_rerun requires a first-run Improvement")
    second = evaluate_synthetic(
        finding, space, baseline, evaluation_id, p_fail=p_fail, rng=rng, cost_units=cost_units
    )
    return _verification_outcome(finding, first, second, rel_tolerance)

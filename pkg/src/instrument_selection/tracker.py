"""
Run Tracker for sequential instrument selection

This module records a typed event log of selection runs:
- Subset choices and their scores
- Experiments and per-round estimates
- Combination results and stopping checks
- Errors raised inside a round
"""

import json
import uuid
from dataclasses import asdict, dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence


class RunEventType(Enum):
    RUN_STARTED = "run_started"
    SUBSET_SELECTED = "subset_selected"
    EXPERIMENT_RUN = "experiment_run"
    ESTIMATE_COMPUTED = "estimate_computed"
    ESTIMATES_COMBINED = "estimates_combined"
    STOPPING_CHECKED = "stopping_checked"
    RUN_FINISHED = "run_finished"
    ERROR = "error"


@dataclass
class RunEvent:
    """Represents a single event in a run"""
    id: str
    timestamp: str
    event_type: RunEventType
    payload: Dict[str, Any]
    metadata: Dict[str, Any]
    session_id: str
    parent_id: Optional[str] = None


class RunTracker:
    """Event log for one or more selection runs"""

    def __init__(self, session_id: Optional[str] = None, max_events: int = 10000):
        self.session_id = session_id or str(uuid.uuid4())
        self.max_events = max_events
        self.events: List[RunEvent] = []
        self.current_run_id: Optional[str] = None
        self._round_parent: Optional[str] = None

    def start_run(self, strategy: str, seed: int, settings: Optional[Dict[str, Any]] = None) -> str:
        """Start a new run"""
        run_id = str(uuid.uuid4())
        self.current_run_id = run_id
        self._add(RunEventType.RUN_STARTED, {"strategy": strategy, "seed": seed, "settings": settings or {}})
        return run_id

    def log_subset_selected(self, round_number: int, instruments: Sequence[int],
                            score: Optional[float] = None) -> str:
        """Log the instruments chosen for a round; later events of the round hang off it"""
        event_id = self._add(
            RunEventType.SUBSET_SELECTED,
            {"instruments": list(instruments), "score": score},
            round_number=round_number,
        )
        self._round_parent = event_id
        return event_id

    def log_experiment(self, round_number: int, instruments: Sequence[int], n: int) -> str:
        return self._add(RunEventType.EXPERIMENT_RUN, {"instruments": list(instruments), "n": n},
                         round_number=round_number, parent_id=self._round_parent)

    def log_estimate(self, round_number: int, rank: int, beta_hat_norm: float) -> str:
        return self._add(RunEventType.ESTIMATE_COMPUTED, {"rank": rank, "beta_hat_norm": beta_hat_norm},
                         round_number=round_number, parent_id=self._round_parent)

    def log_combined(self, round_number: int, combined_norm: float, identified_fraction: float) -> str:
        return self._add(
            RunEventType.ESTIMATES_COMBINED,
            {"combined_norm": combined_norm, "identified_fraction": identified_fraction},
            round_number=round_number,
            parent_id=self._round_parent,
        )

    def log_stopping_check(self, round_number: int, gap: Optional[float], tolerance: Optional[float],
                           stopped: bool) -> str:
        return self._add(
            RunEventType.STOPPING_CHECKED,
            {"gap": gap, "tolerance": tolerance, "stopped": stopped},
            round_number=round_number,
            parent_id=self._round_parent,
        )

    def finish_run(self, n_rounds: int, stopped_early: bool) -> str:
        event_id = self._add(RunEventType.RUN_FINISHED, {"n_rounds": n_rounds, "stopped_early": stopped_early})
        self._round_parent = None
        return event_id

    def log_error(self, error: str, error_type: str = "general", round_number: Optional[int] = None) -> str:
        """Log an error"""
        return self._add(RunEventType.ERROR, {"error": error, "type": error_type},
                         round_number=round_number, parent_id=self._round_parent)

    def _add(self, event_type: RunEventType, payload: Dict[str, Any], round_number: Optional[int] = None,
             parent_id: Optional[str] = None) -> str:
        event = RunEvent(
            id=str(uuid.uuid4()),
            timestamp=datetime.now().isoformat(),
            event_type=event_type,
            payload=payload,
            metadata={"run_id": self.current_run_id, "round": round_number},
            session_id=self.session_id,
            parent_id=parent_id,
        )
        self.events.append(event)

        # Maintain max events limit
        if len(self.events) > self.max_events:
            self.events = self.events[-self.max_events:]
        return event.id

    def get_run_events(self, run_id: str) -> List[RunEvent]:
        """Get all events for a specific run"""
        return [e for e in self.events if e.metadata.get("run_id") == run_id]

    def get_round_events(self, run_id: str, round_number: int) -> List[RunEvent]:
        return [e for e in self.get_run_events(run_id) if e.metadata.get("round") == round_number]

    def get_session_summary(self) -> Dict[str, Any]:
        """Get summary of the entire session"""
        if not self.events:
            return {"total_events": 0, "runs": 0}

        event_counts: Dict[str, int] = {}
        for event in self.events:
            event_counts[event.event_type.value] = event_counts.get(event.event_type.value, 0) + 1
        stops = [e for e in self.events if e.event_type == RunEventType.STOPPING_CHECKED and e.payload["stopped"]]

        return {
            "session_id": self.session_id,
            "total_events": len(self.events),
            "runs": len({e.metadata["run_id"] for e in self.events if e.metadata.get("run_id")}),
            "event_counts": event_counts,
            "stop_rounds": [e.metadata["round"] for e in stops],
            "first_event": self.events[0].timestamp,
            "last_event": self.events[-1].timestamp,
        }

    def export_session(self, format: str = "json") -> str:
        """Export the entire session"""
        session_data = {
            "session_id": self.session_id,
            "summary": self.get_session_summary(),
            "events": [asdict(e) for e in self.events],
        }
        for event in session_data["events"]:
            event["event_type"] = event["event_type"].value

        if format.lower() == "json":
            return json.dumps(session_data, indent=2, default=str)
        raise ValueError(f"Unsupported export format: {format}")

    def clear_session(self):
        """Clear all events in the session"""
        self.events.clear()
        self.current_run_id = None
        self._round_parent = None

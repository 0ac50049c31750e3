"""
Run Logger
In-memory structured log of partition, setup and solve events
"""

from typing import List, Dict, Optional
from datetime import datetime
from dataclasses import dataclass
import json
import threading


@dataclass
class RunEvent:
    """A single event recorded during a run"""
    timestamp: datetime
    component: str  # "System", "Partition", "Setup", "Solver"
    event_type: str  # "info", "metrics", "result", "warning"
    content: str
    metadata: Optional[Dict] = None


DEFAULT_MAX_EVENTS = 10000


class RunLogger:
    """Logger for benchmark and solver runs; keeps the newest max_events events"""

    def __init__(self, echo: bool = False, max_events: Optional[int] = DEFAULT_MAX_EVENTS):
        if max_events is not None and max_events < 1:
            raise ValueError(f"max_events must be >= 1 or None, got {max_events}")
        self.events: List[RunEvent] = []
        self.echo = echo
        self.max_events = max_events
        self.dropped = 0
        self.current_run_id = None
        self._lock = threading.Lock()

    def _record(self, component: str, event_type: str, content: str,
                metadata: Optional[Dict] = None):
        event = RunEvent(
            timestamp=datetime.now(),
            component=component,
            event_type=event_type,
            content=content,
            metadata=metadata
        )
        with self._lock:
            self.events.append(event)
            if self.max_events is not None and len(self.events) > self.max_events:
                extra = len(self.events) - self.max_events
                del self.events[:extra]
                self.dropped += extra
        if self.echo:
            print(content)

    def start_run(self, run_id: str):
        """Start a new run"""
        self.current_run_id = run_id
        self.log_system(f"🚀 Starting run: {run_id}")

    def log_system(self, message: str, metadata: Optional[Dict] = None):
        """Log system message"""
        self._record("System", "info", message, metadata)

    def log_partition(self, method: str, nprocs: int, sizes: List[int]):
        """Log a computed partition"""
        self._record(
            "Partition", "metrics",
            f"📊 Partition {method}: {nprocs} ranks, sizes {min(sizes)}..{max(sizes)}",
            {"method": method, "nprocs": nprocs, "sizes": list(sizes)}
        )

    def log_setup(self, component: str, message: str, metadata: Optional[Dict] = None):
        """Log preconditioner setup summary"""
        self._record(f"Setup: {component}", "metrics", f"📊 {message}", metadata)

    def log_solve(self, method: str, iterations: int, residual: float,
                  converged: bool, stop_reason: str):
        """Log solver outcome"""
        status = "✅ converged" if converged else "⚠️ not converged"
        self._record(
            "Solver", "result",
            f"{status}: {method} {iterations} its, residual {residual:.3e} ({stop_reason})",
            {"method": method, "iterations": iterations, "residual": residual,
             "converged": converged, "stop_reason": stop_reason}
        )

    def log_warning(self, component: str, message: str, metadata: Optional[Dict] = None):
        """Log a warning"""
        self._record(component, "warning", f"⚠️ {message}", metadata)

    def get_events(self) -> List[Dict]:
        """Get all events as dict list"""
        with self._lock:
            events = list(self.events)
        return [
            {
                "timestamp": ev.timestamp.strftime("%H:%M:%S"),
                "component": ev.component,
                "type": ev.event_type,
                "content": ev.content,
                "metadata": ev.metadata or {}
            }
            for ev in events
        ]

    def get_latest_events(self, n: int = 10) -> List[Dict]:
        """Get latest N events"""
        return self.get_events()[-n:]

    def clear(self):
        """Clear all events"""
        with self._lock:
            self.events = []
            self.dropped = 0
        self.current_run_id = None

    def export_to_json(self, clear: bool = False) -> str:
        """Export events to JSON, optionally clearing them afterwards"""
        data = json.dumps(self.get_events(), indent=2)
        if clear:
            self.clear()
        return data


# Global logger instance
_global_logger = RunLogger()


def get_run_logger() -> RunLogger:
    """Get the global run logger"""
    return _global_logger

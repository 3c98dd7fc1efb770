from __future__ import annotations

from pathlib import Path
from typing import Optional


class EntrouteError(Exception):
    """Base class for every error raised by the simulator."""


# ---------- Topology ----------

class TopologyError(EntrouteError):
    pass


class TopologyParseError(TopologyError):
    def __init__(self, message: str, path: Optional[Path] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = str(path) if path is not None else "<text>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


class UnknownNodeError(TopologyError):
    def __init__(self, node: object):
        self.node = node
        super().__init__(f"unknown node {node!r}")


class DisconnectedGraphError(TopologyError):
    pass


class RootSelectionError(TopologyError):
    pass


# ---------- Link layer ----------

class LinkStateError(EntrouteError):
    pass


class EdgeOccupiedError(LinkStateError):
    pass


class DeadLinkError(LinkStateError):
    pass


class SwapPreconditionError(LinkStateError):
    pass


# ---------- Trees, engine, config ----------

class TreeError(EntrouteError):
    pass


class NoPairAtDistanceError(EntrouteError):
    def __init__(self, distance: int):
        self.distance = distance
        super().__init__(f"no node pair at graph distance {distance}")


class InvariantViolation(EntrouteError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        head = "; ".join(violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"{len(violations)} invariant violation(s): {head}{more}")


class ConfigError(EntrouteError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")

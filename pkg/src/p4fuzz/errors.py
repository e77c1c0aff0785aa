"""Exception hierarchy shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    line: int | None = None
    col: int | None = None

    def __str__(self) -> str:
        if self.line is None:
            return f"{self.kind}: {self.message}"
        return f"{self.line}:{self.col}: {self.kind}: {self.message}"


class P4FuzzError(Exception):
    pass


class FrontendError(P4FuzzError):
    """Base for source diagnostics. ``diagnostics`` holds every problem found."""

    kind = "error"

    def __init__(self, message: str, line: int | None = None, col: int | None = None,
                 diagnostics: list[Diagnostic] | None = None):
        self.line = line
        self.col = col
        self.diagnostics = diagnostics or [Diagnostic(self.kind, message, line, col)]
        super().__init__(str(self.diagnostics[0]) if len(self.diagnostics) == 1
                         else "\n".join(str(d) for d in self.diagnostics))


class P4SyntaxError(FrontendError):
    kind = "syntax error"


class P4ReferenceError(FrontendError):
    kind = "reference error"


class P4TypeError(FrontendError):
    kind = "type error"


class CycleError(FrontendError):
    kind = "cycle error"


class LayoutOverflow(P4FuzzError):
    pass


class RuntimeFault(P4FuzzError):
    pass


class EntryError(P4FuzzError):
    """Malformed or inapplicable table command."""


class NoTemplates(P4FuzzError):
    pass


class ConfigError(P4FuzzError):
    pass


class ScriptError(P4FuzzError):
    pass


class EffectError(P4FuzzError):
    pass


class HandlerDepthExceeded(P4FuzzError):
    pass

"""Registry of map/reduce/combine functions addressable by id.

Jobs reference functions by string id so task payloads stay picklable for
process-based workers. Combiners must be declared associative and
commutative; the engine refuses undeclared ones.
"""

from __future__ import annotations

from typing import Callable

from .errors import UnknownFunction

_functions: dict[str, Callable] = {}
_combiner_ok: set[str] = set()


def register(fn_id: str, fn: Callable, combiner_safe: bool = False) -> None:
    _functions[fn_id] = fn
    if combiner_safe:
        _combiner_ok.add(fn_id)


def resolve(fn_id: str) -> Callable:
    _ensure_builtins()
    try:
        return _functions[fn_id]
    except KeyError:
        raise UnknownFunction(f"function id {fn_id!r} is not registered") from None


def is_combiner_safe(fn_id: str) -> bool:
    _ensure_builtins()
    return fn_id in _combiner_ok


def registered_ids() -> list[str]:
    _ensure_builtins()
    return sorted(_functions)


def _ensure_builtins() -> None:
    # idempotent; worker processes resolve ids without prior setup
    from . import jobs  # noqa: F401

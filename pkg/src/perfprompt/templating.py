"""Loading and filling the bundled prompt templates."""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Mapping

from perfprompt.errors import MissingPlaceholder

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("perfprompt").joinpath(f"templates/{name}.txt").read_text(encoding="utf-8")


def fill(template: str, values: Mapping[str, str]) -> str:
    """Substitute ``{name}`` placeholders in a single left-to-right pass.

    Only names present in ``values`` are replaced, so literal braces (JSON
    examples, C++ code) survive, and substituted text is never re-expanded.
    Every supplied name must occur in the template.
    """
    present = set(_PLACEHOLDER.findall(template))
    missing = set(values) - present
    if missing:
        raise MissingPlaceholder(f"template has no placeholder(s) {sorted(missing)}")

    def sub(m: re.Match) -> str:
        return values[m.group(1)] if m.group(1) in values else m.group(0)

    return _PLACEHOLDER.sub(sub, template)

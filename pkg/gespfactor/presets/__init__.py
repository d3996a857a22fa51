"""Bundled run configurations.

Each ``<name>.json`` next to this file is a complete config in the same
schema ``parse_config`` reads; ``--preset <name>`` loads it instead of a file.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from gespfactor.errors import ConfigValidationError, ParseError

PRESETS_DIR = Path(__file__).parent  # JSONs live next to this file

# Presets whose grid cannot resolve a Hermite bank; every other subcommand needs one.
PRESET_SUBCOMMANDS: Dict[str, Tuple[str, ...]] = {"brownian": ("kl",)}


def available_presets() -> List[str]:
    return sorted(p.stem for p in PRESETS_DIR.glob("*.json"))


def preset_path(name: str) -> Path:
    path = PRESETS_DIR / f"{name}.json"
    if not path.is_file():
        raise ConfigValidationError(
            f"unknown preset {name!r}; available: {', '.join(available_presets())}",
            field="preset",
        )
    return path


def load_preset(name: str, subcommand: Optional[str] = None) -> Dict[str, Any]:
    """Raw (unvalidated) config mapping of a bundled preset.

    With ``subcommand`` given, presets restricted to other subcommands are refused.
    """
    path = preset_path(name)
    allowed = PRESET_SUBCOMMANDS.get(name)
    if subcommand is not None and allowed is not None and subcommand not in allowed:
        raise ConfigValidationError(
            f"preset {name!r} only supports {', '.join(allowed)}; its grid is too small for a test function bank",
            field="preset",
        )
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"preset {name}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc

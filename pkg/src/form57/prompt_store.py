"""Loading and digesting of the prompt templates shipped with the package.

Templates are plain text files using ``string.Template`` placeholders. They
live in the ``prompts/`` package directory by default; a pipeline config may
point at an override directory instead, in which case files found there shadow
the packaged ones name by name.
"""

from __future__ import annotations

import hashlib
import string
from importlib import resources
from pathlib import Path

_PACKAGE_DIR = "form57.prompts"

TEMPLATE_NAMES = (
    "system",
    "layout_human_centric",
    "layout_naive",
    "transcribe",
    "merge_transcriptions",
    "grouping",
    "merge_groups",
    "qa",
    "judge",
)


class PromptNotFound(KeyError):
    """Raised when a template name resolves to no file."""


def load_text(name: str, prompts_dir: str | Path | None = None) -> str:
    """Return the raw text of template ``name`` (without the .txt suffix)."""
    filename = f"{name}.txt"
    if prompts_dir is not None:
        candidate = Path(prompts_dir) / filename
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8")
    ref = resources.files(_PACKAGE_DIR) / filename
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise PromptNotFound(name) from None


def load_template(name: str, prompts_dir: str | Path | None = None) -> string.Template:
    return string.Template(load_text(name, prompts_dir))


def digest(name: str, prompts_dir: str | Path | None = None) -> str:
    """sha256 of the template bytes, recorded in run manifests."""
    text = load_text(name, prompts_dir)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest_all(prompts_dir: str | Path | None = None) -> dict[str, str]:
    return {name: digest(name, prompts_dir) for name in TEMPLATE_NAMES}

"""Fixed registry of supported language codes and display names."""

from __future__ import annotations

# Spelled-out names are used verbatim in rendered prompts, so the
# registry is closed: an unknown code is a hard error, never a guess.
REGISTRY: dict[str, str] = {
    "de": "German",
    "en": "English",
    "es": "Spanish",
    "fr": "French",
    "it": "Italian",
    "ko": "Korean",
    "nl": "Dutch",
    "pt": "Portuguese",
    "ru": "Russian",
    "zh": "Chinese",
}


def is_supported(code: str) -> bool:
    return code in REGISTRY


def display_name(code: str) -> str:
    """Spelled-out English name for a registered language code."""
    try:
        return REGISTRY[code]
    except KeyError:
        raise ValueError(f"unknown language code: {code!r}") from None

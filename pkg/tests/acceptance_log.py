"""Collects one pass/fail line per acceptance criterion."""

LINES = []


def report(label: str, ok, detail: str) -> None:
    """``ok=None`` marks an informational line that is not a criterion."""
    tag = "INFO" if ok is None else ("PASS" if ok else "FAIL")
    line = f"{tag} {label}: {detail}"
    LINES.append(line)
    print(line)

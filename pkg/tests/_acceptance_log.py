"""Shared record of acceptance verdicts, printed at the end of a run."""

RESULTS: dict[int, str] = {}


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[number] = line
    print(line)

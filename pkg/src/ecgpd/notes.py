"""EF labels from free-text clinical notes.

Notes are gated on keywords, then a small deterministic grammar pulls the
EF statement nearest after each EF keyword (within 40 characters). The
last mention in a note wins. An optional external language-model client
is only consulted when the grammar finds nothing.
"""
from __future__ import annotations

import json
import logging
import re
import threading
import time
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .cohort import EF_CUTOFF
from .errors import LlmUnavailable, MalformedLlmJson, NoValue

log = logging.getLogger(__name__)

EF_KEYWORDS = ("ejection fraction", "EF", "LVEF")
IMAGING_KEYWORDS = ("echo", "echocardiogram", "TTE")
WINDOW = 40
YEAR_SECONDS = 365 * 86400

EXACT, RANGE, LOWER, UPPER, NONE = "exact", "range", "lower_bound", "upper_bound", "none"
GRAMMAR, LLM = "grammar", "llm"

ambiguity = Counter()  # notes with several EF mentions that disagree


def _keyword_re(words: Iterable[str]) -> re.Pattern:
    alts = sorted((re.escape(w).replace(r"\ ", r"\s+") for w in words), key=len, reverse=True)
    return re.compile(r"\b(?:" + "|".join(alts) + r")\b", re.IGNORECASE)


_NUM = r"(\d{1,3}(?:\.\d+)?)"
_VALUE_RE = re.compile(
    rf"(?P<range>{_NUM}\s*(?:-|–|to)\s*{_NUM}\s*%)"
    rf"|(?P<lower>(?:>=|≥|>)\s*{_NUM}\s*%)"
    rf"|(?P<upper>(?:<=|≤|<)\s*{_NUM}\s*%)"
    rf"|(?P<exact>{_NUM}\s*%)",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class EfExtraction:
    kind: str
    value_percent: float | None = None
    range_low: float | None = None
    range_high: float | None = None
    source_span: tuple[int, int] | None = None
    method: str = GRAMMAR
    n_mentions: int = 0

    def to_record(self, note_id: str) -> dict:
        return {
            "note_id": note_id,
            "kind": self.kind,
            "value": self.value_percent,
            "low": self.range_low,
            "high": self.range_high,
            "span": list(self.source_span) if self.source_span else None,
            "method": self.method,
        }


NO_EXTRACTION = EfExtraction(NONE)


class Grammar:
    def __init__(self, ef_keywords=EF_KEYWORDS, imaging_keywords=IMAGING_KEYWORDS, window: int = WINDOW):
        self.ef_re = _keyword_re(ef_keywords)
        self.img_re = _keyword_re(imaging_keywords)
        self.window = window

    def gate(self, text: str) -> bool:
        return bool(self.ef_re.search(text)) and bool(self.img_re.search(text))

    def mentions(self, text: str) -> list[EfExtraction]:
        out = []
        for kw in self.ef_re.finditer(text):
            start = kw.end()
            m = _VALUE_RE.search(text, start, min(len(text), start + self.window))
            if m is None:
                continue
            e = _from_match(m)
            if e is not None:
                out.append(e)
        return out

    def extract(self, text: str) -> EfExtraction:
        found = self.mentions(text)
        if not found:
            return NO_EXTRACTION
        if len({(e.kind, e.value_percent, e.range_low, e.range_high) for e in found}) > 1:
            ambiguity["notes"] += 1
        last = found[-1]
        return EfExtraction(
            last.kind, last.value_percent, last.range_low, last.range_high, last.source_span, GRAMMAR, len(found)
        )


def _valid(v: float) -> bool:
    return 0.0 < v <= 100.0


def _from_match(m: re.Match, offset: int = 0) -> EfExtraction | None:
    span = (m.start() + offset, m.end() + offset)
    g = [x for x in m.groups()[1:] if x is not None]
    nums = [float(x) for x in g if re.fullmatch(r"\d{1,3}(?:\.\d+)?", x)]
    if not all(_valid(v) for v in nums):
        return None
    if m.group("range"):
        lo, hi = nums
        if lo > hi:
            return None
        return EfExtraction(RANGE, None, lo, hi, span)
    if m.group("lower"):
        return EfExtraction(LOWER, nums[0], None, None, span)
    if m.group("upper"):
        return EfExtraction(UPPER, nums[0], None, None, span)
    return EfExtraction(EXACT, nums[0], None, None, span)


def parse_value_expr(s: str) -> EfExtraction:
    """Parse a bare value expression such as ``40%``, ``40-45%`` or ``>55%``."""
    m = _VALUE_RE.fullmatch(s.strip())
    e = _from_match(m) if m else None
    return e or NO_EXTRACTION


DEFAULT_GRAMMAR = Grammar()


def gate_note(text: str, grammar: Grammar = DEFAULT_GRAMMAR) -> bool:
    return grammar.gate(text)


# ------------------------------------------------------------------ language-model client

PROMPT_TEMPLATE = (
    "Read the clinical note below and report the left ventricular ejection fraction measured "
    "on the echocardiogram (Echo/TTE) described in it. Answer with a JSON object of the form "
    '{{"ef_value": <number or null>}} and nothing else.\n\nNote:\n{text}'
)


class HttpLlmClient:
    """POSTs ``{"prompt": ...}`` to ``url`` and returns the response body text."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def __call__(self, prompt: str) -> str:
        req = urllib.request.Request(
            self.url,
            data=json.dumps({"prompt": prompt}).encode(),
            headers={"Content-Type": "application/json"},
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return resp.read().decode()


def parse_llm_response(body: str) -> EfExtraction:
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedLlmJson(f"response is not JSON: {exc}") from None
    if not isinstance(obj, dict) or "ef_value" not in obj:
        raise MalformedLlmJson("response lacks the ef_value key")
    v = obj["ef_value"]
    if v is None:
        return EfExtraction(NONE, method=LLM)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MalformedLlmJson(f"ef_value must be a number or null, got {v!r}")
    if not _valid(float(v)):
        raise MalformedLlmJson(f"ef_value {v!r} outside (0, 100]")
    return EfExtraction(EXACT, float(v), method=LLM, n_mentions=1)


class LlmEscalation:
    """Calls ``client(prompt) -> str`` with retries and an in-flight cap."""

    def __init__(
        self,
        client: Callable[[str], str],
        retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.client = client
        self.retries = retries
        self.backoff = backoff
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def __call__(self, text: str) -> EfExtraction:
        prompt = PROMPT_TEMPLATE.format(text=text)
        last_exc = None
        for attempt in range(self.retries):
            try:
                with self._slots:
                    body = self.client(prompt)
            except (OSError, TimeoutError, ConnectionError) as exc:
                last_exc = exc
                if attempt + 1 < self.retries:
                    self.sleep(self.backoff * 2**attempt)
                continue
            return parse_llm_response(body)
        raise LlmUnavailable(f"client failed {self.retries} times: {last_exc}")


def extract_ef(text: str, grammar: Grammar = DEFAULT_GRAMMAR, llm: LlmEscalation | None = None) -> EfExtraction:
    """Grammar first; the client (if any) only sees notes the grammar cannot read."""
    e = grammar.extract(text)
    if e.kind != NONE or llm is None:
        return e
    return llm(text)


def label_from_ef(e: EfExtraction, cutoff: float = EF_CUTOFF) -> int | None:
    """1 (low EF), 0, or ``None`` when a bound does not settle the class."""
    if e.kind == EXACT:
        return int(e.value_percent <= cutoff)
    if e.kind == RANGE:
        return int((e.range_low + e.range_high) / 2.0 <= cutoff)
    if e.kind == LOWER:
        return 0 if e.value_percent >= cutoff + 1 else None
    if e.kind == UPPER:
        return 1 if e.value_percent <= cutoff else None
    raise NoValue("no EF value to label")


# ------------------------------------------------------------------ pairing


@dataclass(frozen=True)
class Note:
    note_id: str
    patient_id: str
    note_time: int
    text: str


@dataclass(frozen=True)
class NotePair:
    patient_id: str
    record_id: str
    note_id: str
    ecg_time: int
    note_time: int

    @property
    def interval_seconds(self) -> int:
        return self.note_time - self.ecg_time


def build_pairs(ecgs: Iterable[dict], notes: Iterable[Note], horizon: int = YEAR_SECONDS) -> list[NotePair]:
    """Every (ECG, note) of one patient with the note 0..horizon seconds after the ECG.

    ``ecgs`` are mappings with ``record_id``, ``patient_id`` and ``ecg_time``.
    """
    by_patient: dict[str, list[Note]] = {}
    for n in notes:
        by_patient.setdefault(n.patient_id, []).append(n)
    out = []
    for e in ecgs:
        for n in by_patient.get(e["patient_id"], ()):
            d = n.note_time - e["ecg_time"]
            if 0 <= d <= horizon:
                out.append(NotePair(e["patient_id"], e["record_id"], n.note_id, e["ecg_time"], n.note_time))
    return out


def select_pairs(pairs: Sequence[NotePair]) -> list[NotePair]:
    """Shortest-interval pair per patient; ties by earliest ECG, then record id."""
    best: dict[str, NotePair] = {}
    for p in pairs:
        if p.interval_seconds < 0:
            raise ValueError(f"negative interval for record {p.record_id}")
        cur = best.get(p.patient_id)
        key = (p.interval_seconds, p.ecg_time, p.record_id, p.note_id)
        if cur is None or key < (cur.interval_seconds, cur.ecg_time, cur.record_id, cur.note_id):
            best[p.patient_id] = p
    return [best[k] for k in sorted(best)]


def consistency_join(labels: dict[str, int], reference: dict[str, int]) -> tuple[dict[str, int], Counter]:
    """Keep records whose note label agrees with an external label file."""
    kept, counts = {}, Counter()
    for rid, y in labels.items():
        ref = reference.get(rid)
        if ref is None:
            counts["missing_reference"] += 1
        elif int(ref) != int(y):
            counts["disagree"] += 1
        else:
            kept[rid] = y
            counts["agree"] += 1
    return kept, counts


# ------------------------------------------------------------------ files


def read_notes(path: str | Path) -> list[Note]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(Note(str(d["note_id"]), str(d["patient_id"]), int(d["note_time"]), d["text"]))
    return out


def write_notes(notes: Iterable[Note], path: str | Path) -> None:
    with open(path, "w") as fh:
        for n in notes:
            fh.write(json.dumps(asdict(n)) + "\n")


def write_extractions(rows: Iterable[tuple[str, EfExtraction]], path: str | Path) -> None:
    with open(path, "w") as fh:
        for note_id, e in rows:
            fh.write(json.dumps(e.to_record(note_id)) + "\n")


def extract_notes(
    notes: Sequence[Note],
    grammar: Grammar = DEFAULT_GRAMMAR,
    llm: LlmEscalation | None = None,
    jobs: int = 1,
) -> list[tuple[str, EfExtraction | None]]:
    """Extraction per note in input order; gated-out notes get ``None``."""

    def one(n: Note):
        if not grammar.gate(n.text):
            return n.note_id, None
        return n.note_id, extract_ef(n.text, grammar, llm)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, notes))
    return [one(n) for n in notes]

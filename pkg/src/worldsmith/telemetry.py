"""Interaction telemetry: durable event log plus analysis helpers.

Every user-visible action in a session becomes one ``InteractionEvent``
appended to an NDJSON log.  Payloads carry enough data (inline PNGs for
sketches and region masks, content ids for picked images) that a log can
be replayed against a fresh service to rebuild the same session.

The analysis side turns logs into first-order transition matrices over
event kinds and codes free-text prompts against a small keyword lexicon
(size, positional, action, quantifier, style, perspective vocabulary).
"""
from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

EVENT_KINDS = (
    "modify_text",
    "modify_region",
    "modify_sketch",
    "modify_tile",
    "run_diffusion",
    "blend",
    "tree_add",
    "tree_select",
)


class TelemetryError(ValueError):
    """An event or log file violated the telemetry contract."""


@dataclass
class InteractionEvent:
    """One logged user action.  Timestamps are unix milliseconds."""

    event_id: int
    timestamp: float
    session_id: str
    kind: str
    tile_id: str | None = None
    payload: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise TelemetryError(f"unknown event kind {self.kind!r}")
        if self.event_id < 1:
            raise TelemetryError("event ids start at 1")

    def to_json(self) -> str:
        doc = {
            "event_id": self.event_id,
            "timestamp": self.timestamp,
            "session_id": self.session_id,
            "kind": self.kind,
            "tile_id": self.tile_id,
            "payload": self.payload,
        }
        return json.dumps(doc, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "InteractionEvent":
        doc = json.loads(line)
        return cls(
            event_id=int(doc["event_id"]),
            timestamp=float(doc["timestamp"]),
            session_id=str(doc["session_id"]),
            kind=str(doc["kind"]),
            tile_id=doc.get("tile_id"),
            payload=dict(doc.get("payload", {})),
        )


class EventStore:
    """Append-only NDJSON event log with crash-safe appends.

    Each append writes the line, flushes, and fsyncs before recording the
    new end offset in a sidecar index (also fsynced).  If the process dies
    mid-write the data file may end in a torn line; on open the store
    truncates back to the last indexed offset and logs a warning, so a
    crash costs at most the event being written.
    """

    def __init__(self, path: str | os.PathLike) -> None:
        self._path = os.fspath(path)
        self._index_path = self._path + ".idx"
        self._last_id = 0
        self._last_ts = float("-inf")
        self._recover()
        self._fh = open(self._path, "ab")
        self._ix = open(self._index_path, "ab")

    @property
    def path(self) -> str:
        return self._path

    @property
    def last_id(self) -> int:
        return self._last_id

    def _recover(self) -> None:
        if not os.path.exists(self._path):
            open(self._path, "ab").close()
            open(self._index_path, "ab").close()
            return
        size = os.path.getsize(self._path)
        # largest fsynced end-offset that still fits the file; anything
        # past it is a torn or half-lost write
        good_end = 0
        offsets: list[int] = []
        if os.path.exists(self._index_path):
            with open(self._index_path, "rb") as ix:
                for raw in ix:
                    if not raw.endswith(b"\n"):
                        break
                    try:
                        offset = int(raw)
                    except ValueError:
                        break
                    if offset <= size:
                        good_end = offset
                        offsets.append(offset)
        if size != good_end:
            log.warning(
                "event log %s does not end on an indexed offset (%d vs %d); "
                "dropping the torn tail",
                self._path,
                size,
                good_end,
            )
            with open(self._path, "r+b") as fh:
                fh.truncate(good_end)
            # drop index entries past the cut so a regrown log cannot be
            # truncated mid-event by a stale offset later
            tmp = self._index_path + ".tmp"
            with open(tmp, "wb") as ix:
                ix.write("".join(f"{off}\n" for off in offsets).encode("ascii"))
                ix.flush()
                os.fsync(ix.fileno())
            os.replace(tmp, self._index_path)
        for event in self.read_all():
            self._last_id = event.event_id
            self._last_ts = event.timestamp

    def record(
        self,
        session_id: str,
        kind: str,
        tile_id: str | None = None,
        payload: dict | None = None,
        timestamp: float | None = None,
    ) -> InteractionEvent:
        """Build the next event in sequence and append it durably."""
        if timestamp is None:
            # wall clock can step backwards; logs must never
            timestamp = max(time.time() * 1000.0, self._last_ts)
        event = InteractionEvent(
            event_id=self._last_id + 1,
            timestamp=timestamp,
            session_id=session_id,
            kind=kind,
            tile_id=tile_id,
            payload=payload or {},
        )
        self.append(event)
        return event

    def append(self, event: InteractionEvent) -> None:
        if event.event_id != self._last_id + 1:
            raise TelemetryError(
                f"event ids must increase by one: got {event.event_id} after {self._last_id}"
            )
        if event.timestamp < self._last_ts:
            raise TelemetryError("event timestamps must be non-decreasing")
        self._fh.write(event.to_json().encode("utf-8") + b"\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._ix.write(f"{self._fh.tell()}\n".encode("ascii"))
        self._ix.flush()
        os.fsync(self._ix.fileno())
        self._last_id = event.event_id
        self._last_ts = event.timestamp

    def read_all(self) -> list[InteractionEvent]:
        events = []
        with open(self._path, "rb") as fh:
            for number, raw in enumerate(fh, start=1):
                try:
                    events.append(InteractionEvent.from_json(raw.decode("utf-8")))
                except (json.JSONDecodeError, KeyError, UnicodeDecodeError) as exc:
                    raise TelemetryError(f"corrupt event on line {number}: {exc}") from exc
        return events

    def close(self) -> None:
        self._fh.close()
        self._ix.close()

    def __enter__(self) -> "EventStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_events(path: str | os.PathLike) -> list[InteractionEvent]:
    """Parse an NDJSON event log, tolerating a torn final line."""
    events: list[InteractionEvent] = []
    with open(path, "rb") as fh:
        lines = fh.read().split(b"\n")
    for number, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            events.append(InteractionEvent.from_json(raw.decode("utf-8")))
        except (json.JSONDecodeError, KeyError, UnicodeDecodeError) as exc:
            if number == len(lines) or all(not rest.strip() for rest in lines[number:]):
                log.warning("dropping torn final event line in %s", path)
                break
            raise TelemetryError(f"corrupt event on line {number}: {exc}") from exc
    return events


def transition_matrix(
    events: Iterable[InteractionEvent | str],
    kinds: Sequence[str] = EVENT_KINDS,
    collapse_runs: bool = True,
) -> np.ndarray:
    """First-order transition probabilities between event kinds.

    Events outside ``kinds`` are dropped before pairing.  With
    collapse_runs, consecutive repeats count as one visit, so repeated
    actions do not inflate self-transitions.  Rows are normalized to sum
    to one; kinds never left keep an all-zero row.
    """
    index = {kind: i for i, kind in enumerate(kinds)}
    if len(index) != len(kinds):
        raise TelemetryError("kinds must be unique")
    sequence = []
    for event in events:
        kind = event if isinstance(event, str) else event.kind
        if kind not in index:
            continue
        if collapse_runs and sequence and sequence[-1] == kind:
            continue
        sequence.append(kind)
    counts = np.zeros((len(kinds), len(kinds)), dtype=np.float64)
    for src, dst in zip(sequence, sequence[1:]):
        counts[index[src], index[dst]] += 1.0
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(totals > 0, counts / totals, 0.0)
    return matrix


# --- prompt coding ---------------------------------------------------------

DEFAULT_LEXICON: dict[str, tuple[str, ...]] = {
    "Size": ("large", "small", "high", "giant", "tall", "tiny", "big"),
    "Positional": (
        "surround",
        "above",
        "side by side",
        "around",
        "underneath",
        "middle",
        "on both sides",
        "bottom",
        "left",
        "corner",
        "north",
        "south",
        "next to",
        "in the carribbean",
        "contain",
        "in rome",
        "between",
        "split by",
        "inland",
        "west",
        "east",
    ),
    "Action": (
        "hunting",
        "selling",
        "erupting",
        "on fire",
        "sits",
        "running",
        "coming",
        "reach",
        "wear",
        "explosion",
        "smoking",
        "painting",
        "holding",
        "extending",
    ),
    "Quantifier": (
        "many",
        "few",
        "dense",
        "some",
        "a lot of",
        "lots of",
        "singular",
        "four",
        "two",
        "several",
    ),
    "Style": (
        "concept art",
        "map",
        "anime",
        "cyberpunk",
        "1950",
        "antique",
        "cartoon",
        "japanese",
        "medieval",
        "fantasy",
        "futuristic",
        "cartographic",
        "geographical",
    ),
    "Perspective": ("2d", "top down", "horizontal", "skyline view", "view", "isometric", "bird"),
}


class CodingLexicon:
    """Keyword lexicon mapping prompt terms to analysis codes.

    Matching is case-insensitive on whitespace-normalized text.  Terms
    match at word boundaries only, and longer terms win over their
    substrings ("skyline view" beats "view").
    """

    def __init__(self, codes: dict[str, Sequence[str]] | None = None) -> None:
        source = DEFAULT_LEXICON if codes is None else codes
        self._codes: dict[str, tuple[str, ...]] = {}
        seen: dict[str, str] = {}
        for code, terms in source.items():
            cleaned = tuple(dict.fromkeys(" ".join(t.lower().split()) for t in terms))
            if not code or not cleaned:
                raise TelemetryError("codes need a name and at least one term")
            for term in cleaned:
                if not term:
                    raise TelemetryError(f"code {code!r} has an empty term")
                if term in seen:
                    raise TelemetryError(
                        f"term {term!r} appears under both {seen[term]!r} and {code!r}"
                    )
                seen[term] = code
            self._codes[code] = cleaned
        ordered = sorted(seen, key=len, reverse=True)
        # terms may contain regex metacharacters ("1950" is fine, but be safe)
        alternation = "|".join(re.escape(term) for term in ordered)
        self._pattern = re.compile(rf"(?<![a-z0-9])(?:{alternation})(?![a-z0-9])")
        self._term_code = seen

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "CodingLexicon":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise TelemetryError("lexicon file must map code names to term lists")
        return cls({str(k): [str(t) for t in v] for k, v in doc.items()})

    @property
    def code_names(self) -> tuple[str, ...]:
        return tuple(self._codes)

    def terms(self, code: str) -> tuple[str, ...]:
        return self._codes[code]

    def matches(self, text: str) -> list[tuple[str, str]]:
        """All (term, code) hits in reading order."""
        normalized = " ".join(text.lower().split())
        return [(m.group(0), self._term_code[m.group(0)]) for m in self._pattern.finditer(normalized)]

    def codes(self, text: str) -> set[str]:
        """The set of codes whose terms occur in the text."""
        return {code for _, code in self.matches(text)}


def code_prompt(text: str, lexicon: CodingLexicon | None = None) -> set[str]:
    """Codes whose keywords appear in the prompt text."""
    return (lexicon or CodingLexicon()).codes(text)


def tokenize(text: str) -> list[str]:
    """Whitespace split with punctuation stripped at token edges."""
    tokens = []
    for raw in text.split():
        token = raw.strip("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")
        if token:
            tokens.append(token)
    return tokens


# --- prompt statistics -----------------------------------------------------


def _latest_texts(events: Iterable[InteractionEvent]) -> tuple[dict, dict, dict]:
    """Final scene text per tile, region description per region, regions per tile."""
    scenes: dict[str, str] = {}
    regions: dict[tuple[str, str], str] = {}
    for event in events:
        if event.kind == "modify_text" and event.payload.get("field") == "scene":
            scenes[event.tile_id or ""] = str(event.payload.get("value", ""))
        elif event.kind == "modify_region":
            key = (event.tile_id or "", str(event.payload.get("region_id", "")))
            if event.payload.get("op") == "remove":
                regions.pop(key, None)
            else:
                regions[key] = str(event.payload.get("description", ""))
    per_tile: dict[str, int] = {}
    for tile_id, _ in regions:
        per_tile[tile_id] = per_tile.get(tile_id, 0) + 1
    return scenes, regions, per_tile


def _summary(values: Sequence[float]) -> dict:
    if not values:
        return {"count": 0, "mean_words": 0.0, "median": 0.0, "iqr": 0.0}
    arr = np.asarray(values, dtype=np.float64)
    q1, q3 = np.percentile(arr, [25.0, 75.0])
    return {
        "count": int(arr.size),
        "mean_words": float(arr.mean()),
        "median": float(np.median(arr)),
        "iqr": float(q3 - q1),
    }


def prompt_stats(
    events: Iterable[InteractionEvent], lexicon: CodingLexicon | None = None
) -> dict:
    """Word-count summaries and code frequencies for final prompt texts.

    Only the last text per tile (scenes) and per region survives, so
    repeated edits of one prompt count once.
    """
    lexicon = lexicon or CodingLexicon()
    scenes, regions, per_tile = _latest_texts(events)
    scene_texts = [t for t in scenes.values() if t.strip()]
    region_texts = [t for t in regions.values() if t.strip()]

    def code_counts(texts: list[str]) -> dict[str, int]:
        counts = {code: 0 for code in lexicon.code_names}
        for text in texts:
            for code in lexicon.codes(text):
                counts[code] += 1
        return counts

    return {
        "scene": _summary([len(tokenize(t)) for t in scene_texts]),
        "region": _summary([len(tokenize(t)) for t in region_texts]),
        "regions_per_tile": _summary(list(per_tile.values())),
        "scene_codes": code_counts(scene_texts),
        "region_codes": code_counts(region_texts),
    }

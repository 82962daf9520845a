"""
Standard MIDI File handling
~~~~~~~~~~~~~~~~~~~~~~~~~~~

Decode SMF bytes into raw track events, turn them into timed notes through the
tempo map, and validate a transcription against a reference performance.

Usage
-----

.. code-block:: python

    from pianobench.midi import parse_smf, to_note_events, diff_transcription

    notes, tempo_map = to_note_events(parse_smf(open("take.mid", "rb").read()))
    reference, _ = to_note_events(parse_smf(open("reference.mid", "rb").read()))
    diff_transcription(notes, reference).passes

"""

import logging
import typing as t
from bisect import bisect_left, bisect_right
from warnings import warn

import numpy as np

from .errors import (
    DanglingNoteOn,
    InvalidVlq,
    MalformedHeader,
    MalformedTrack,
    TruncatedChunk,
    UnmatchedNoteOff,
)
from .types import (
    MatchedNote,
    MidiEvent,
    MidiFile,
    NoteEvent,
    TempoMap,
    TranscriptionDiff,
)

logger = logging.getLogger(__name__)

HEADER_TAG = b"MThd"
TRACK_TAG = b"MTrk"
DEFAULT_TEMPO = 500_000
VLQ_LIMIT = 1 << 28

# data bytes following a channel status, keyed by its high nibble
CHANNEL_DATA_LENGTH = {
    0x80: 2,  # note off
    0x90: 2,  # note on
    0xA0: 2,  # polyphonic key pressure
    0xB0: 2,  # control change
    0xC0: 1,  # program change
    0xD0: 1,  # channel pressure
    0xE0: 2,  # pitch bend
}

TIMING_SLACK_MS = 1e-6
RATIO_SLACK = 1e-9


def read_vlq(data: bytes, offset: int, end: t.Optional[int] = None) -> tuple[int, int]:
    """Decode a variable-length quantity, returning (value, next offset)."""
    end = len(data) if end is None else end
    value = 0
    for i in range(4):
        if offset + i >= end:
            raise TruncatedChunk(f"variable-length quantity runs past byte {end}")
        byte = data[offset + i]
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, offset + i + 1
    raise InvalidVlq(f"variable-length quantity at byte {offset} exceeds 4 bytes")


def encode_vlq(value: int) -> bytes:
    if not 0 <= value < VLQ_LIMIT:
        raise ValueError(f"{value} cannot be encoded as a variable-length quantity")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _take(data: bytes, offset: int, size: int, end: int) -> bytes:
    if offset + size > end:
        raise TruncatedChunk(f"event payload of {size} bytes runs past byte {end}")
    return bytes(data[offset : offset + size])


def _parse_track(data: bytes, offset: int, end: int) -> tuple[MidiEvent, ...]:
    events: list[MidiEvent] = []
    running: t.Optional[int] = None
    while offset < end:
        delta, offset = read_vlq(data, offset, end)
        if offset >= end:
            raise TruncatedChunk("track ends between a delta time and its event")
        status = data[offset]
        if status & 0x80:
            offset += 1
        elif running is None:
            raise MalformedTrack(f"data byte {status:#04x} without running status")
        else:
            status = running

        if status == 0xFF:
            meta_type = _take(data, offset, 1, end)[0]
            size, offset = read_vlq(data, offset + 1, end)
            payload = _take(data, offset, size, end)
            offset += size
            events.append(MidiEvent(delta, "meta", status, payload, meta_type))
            running = None
            if meta_type == 0x2F:
                break
        elif status in (0xF0, 0xF7):
            size, offset = read_vlq(data, offset, end)
            payload = _take(data, offset, size, end)
            offset += size
            events.append(MidiEvent(delta, "sysex", status, payload))
            running = None
        elif status > 0xF0:
            raise MalformedTrack(f"system message {status:#04x} in a file track")
        else:
            size = CHANNEL_DATA_LENGTH[status & 0xF0]
            payload = _take(data, offset, size, end)
            if any(b & 0x80 for b in payload):
                raise MalformedTrack(f"status byte inside the data of {status:#04x}")
            offset += size
            events.append(MidiEvent(delta, "channel", status, payload))
            running = status

    if not events or not events[-1].is_end_of_track:
        raise MalformedTrack("track does not end with an end-of-track event")
    return tuple(events)


def parse_smf(data: bytes) -> MidiFile:
    """Decode a Standard MIDI File. Unknown chunks are skipped, unknown events kept."""
    if len(data) < 14 or data[:4] != HEADER_TAG:
        raise MalformedHeader("input does not start with an MThd header chunk")
    length = int.from_bytes(data[4:8], "big")
    if length < 6 or len(data) < 8 + length:
        raise MalformedHeader(f"header chunk length {length} is invalid")
    fmt, ntracks, division = (
        int.from_bytes(data[i : i + 2], "big") for i in (8, 10, 12)
    )
    if fmt not in (0, 1, 2):
        raise MalformedHeader(f"unknown file format {fmt}")
    if division & 0x8000:
        raise MalformedHeader("SMPTE time division is not supported")
    if division == 0:
        raise MalformedHeader("division must be positive")
    if fmt == 0 and ntracks != 1:
        raise MalformedHeader(f"format 0 declares {ntracks} tracks")

    tracks: list[tuple[MidiEvent, ...]] = []
    offset = 8 + length
    while offset < len(data) and len(tracks) < ntracks:
        if offset + 8 > len(data):
            raise TruncatedChunk(f"chunk header at byte {offset} is cut short")
        tag = data[offset : offset + 4]
        start = offset + 8
        end = start + int.from_bytes(data[offset + 4 : start], "big")
        if end > len(data):
            raise TruncatedChunk(f"chunk {tag!r} at byte {offset} is cut short")
        if tag == TRACK_TAG:
            tracks.append(_parse_track(data, start, end))
        else:
            logger.info("skipping unknown chunk %r at byte %d", tag, offset)
        offset = end

    if len(tracks) < ntracks:
        raise TruncatedChunk(f"header declares {ntracks} tracks, found {len(tracks)}")
    return MidiFile(format=fmt, division=division, tracks=tuple(tracks))


def serialize_smf(midi: MidiFile) -> bytes:
    """Encode a MidiFile. Running status is never used."""
    out = bytearray(HEADER_TAG)
    out += (6).to_bytes(4, "big")
    out += midi.format.to_bytes(2, "big")
    out += len(midi.tracks).to_bytes(2, "big")
    out += midi.division.to_bytes(2, "big")
    for track in midi.tracks:
        body = bytearray()
        for event in track:
            body += encode_vlq(event.delta)
            if event.kind == "meta":
                body += bytes([0xFF, t.cast(int, event.meta_type)])
                body += encode_vlq(len(event.data)) + event.data
            elif event.kind == "sysex":
                body += bytes([event.status]) + encode_vlq(len(event.data)) + event.data
            else:
                body += bytes([event.status]) + event.data
        out += TRACK_TAG + len(body).to_bytes(4, "big") + body
    return bytes(out)


def notes_to_smf(
    notes: t.Iterable[NoteEvent],
    division: int = 480,
    tempo: int = DEFAULT_TEMPO,
) -> MidiFile:
    """Build a format-0 file holding `notes` at a constant tempo."""
    ticks_per_second = division * 1e6 / tempo
    timed: list[tuple[int, int, MidiEvent]] = []
    for note in notes:
        on = round(note.onset * ticks_per_second)
        off = round(note.offset * ticks_per_second)
        # offs sort before ons on the same tick so re-strikes stay distinct
        note_off = bytes([note.pitch, 0])
        note_on = bytes([note.pitch, note.velocity])
        timed.append((off, 0, MidiEvent(0, "channel", 0x80 | note.channel, note_off)))
        timed.append((on, 1, MidiEvent(0, "channel", 0x90 | note.channel, note_on)))
    timed.sort(key=lambda item: (item[0], item[1], item[2].data[0], item[2].status))

    events = [MidiEvent(0, "meta", 0xFF, tempo.to_bytes(3, "big"), 0x51)]
    last = 0
    for tick, _, event in timed:
        events.append(MidiEvent(tick - last, event.kind, event.status, event.data))
        last = tick
    events.append(MidiEvent(0, "meta", 0xFF, b"", 0x2F))
    return MidiFile(format=0, division=division, tracks=(tuple(events),))


def tempo_map(midi: MidiFile) -> TempoMap:
    changes: dict[int, int] = {}
    for track in midi.tracks:
        tick = 0
        for event in track:
            tick += event.delta
            is_tempo = event.kind == "meta" and event.meta_type == 0x51
            if is_tempo and len(event.data) == 3:
                changes[tick] = int.from_bytes(event.data, "big")
    changes.setdefault(0, DEFAULT_TEMPO)
    return TempoMap(division=midi.division, entries=tuple(sorted(changes.items())))


def to_note_events(midi: MidiFile) -> tuple[list[NoteEvent], TempoMap]:
    """
    Pair note-ons with their note-offs and convert ticks to seconds.
    A note-on for a pitch that is already sounding closes the sounding note first.
    """
    tempo = tempo_map(midi)
    notes: list[NoteEvent] = []

    def close(key: tuple[int, int], start: tuple[int, int], tick: int) -> None:
        (channel, pitch), (on_tick, velocity) = key, start
        if tick <= on_tick:
            logger.warning("dropping zero-length note %d at tick %d", pitch, tick)
            return
        notes.append(
            NoteEvent(
                pitch=pitch,
                velocity=velocity,
                onset=tempo.seconds(on_tick),
                offset=tempo.seconds(tick),
                channel=channel,
            )
        )

    for index, track in enumerate(midi.tracks):
        tick = 0
        sounding: dict[tuple[int, int], tuple[int, int]] = {}
        for event in track:
            tick += event.delta
            if event.kind != "channel" or event.status & 0xE0 != 0x80:
                continue
            key = (event.channel, event.data[0])
            velocity = event.data[1]
            if event.status & 0xF0 == 0x90 and velocity > 0:
                if key in sounding:
                    close(key, sounding.pop(key), tick)
                sounding[key] = (tick, velocity)
            elif key in sounding:
                close(key, sounding.pop(key), tick)
            else:
                warn(
                    f"track {index}: note-off for pitch {key[1]} at tick {tick} "
                    "has no sounding note",
                    UnmatchedNoteOff,
                    stacklevel=2,
                )
        for key, start in sorted(sounding.items()):
            warn(
                f"track {index}: pitch {key[1]} still sounding at track end",
                DanglingNoteOn,
                stacklevel=2,
            )
            close(key, start, tick)

    notes.sort()
    return notes, tempo


def histograms(
    notes: t.Iterable[NoteEvent], velocity_bin_width: int = 8
) -> tuple[np.ndarray, np.ndarray]:
    """Pitch counts (128 bins) and velocity counts in bins of `velocity_bin_width`."""
    if velocity_bin_width <= 0 or 128 % velocity_bin_width:
        raise ValueError(f"bin width {velocity_bin_width} does not divide 128")
    notes = list(notes)
    pitches = np.array([n.pitch for n in notes], dtype=int)
    velocities = np.array([n.velocity for n in notes], dtype=int)
    pitch_counts = np.bincount(pitches, minlength=128)
    velocity_bins = np.bincount(
        velocities // velocity_bin_width, minlength=128 // velocity_bin_width
    )
    return pitch_counts, velocity_bins


def histogram_json(
    pitch_counts: np.ndarray, velocity_bins: np.ndarray, bin_width: int
) -> dict[str, t.Any]:
    return {
        "pitch_counts": [int(c) for c in pitch_counts],
        "velocity_bins": [int(c) for c in velocity_bins],
        "bin_width": int(bin_width),
    }


def corpus_summary(notes: t.Sequence[NoteEvent]) -> dict[str, float]:
    if not notes:
        return {
            "notes": 0,
            "seconds": 0.0,
            "notes_per_second": 0.0,
            "mean_velocity": 0.0,
        }
    seconds = max(n.offset for n in notes) - min(n.onset for n in notes)
    return {
        "notes": len(notes),
        "seconds": seconds,
        "notes_per_second": len(notes) / seconds,
        "mean_velocity": float(np.mean([n.velocity for n in notes])),
    }


def _greedy_pairs(
    reference: t.Sequence[NoteEvent],
    candidate: t.Sequence[NoteEvent],
    ref_ids: t.Iterable[int],
    cand_ids: t.Iterable[int],
    window: float,
    same_pitch: bool,
) -> list[tuple[int, int]]:
    """Nearest-onset greedy pairing of the given notes within `window` seconds."""
    cand_ids = sorted(cand_ids, key=lambda j: candidate[j].onset)
    onsets = [candidate[j].onset for j in cand_ids]
    options = []
    for i in ref_ids:
        r = reference[i]
        lo = bisect_left(onsets, r.onset - window)
        hi = bisect_right(onsets, r.onset + window)
        for j in cand_ids[lo:hi]:
            if (candidate[j].pitch == r.pitch) == same_pitch:
                options.append((abs(candidate[j].onset - r.onset), i, j))
    options.sort()

    used_ref: set[int] = set()
    used_cand: set[int] = set()
    pairs = []
    for _, i, j in options:
        if i not in used_ref and j not in used_cand:
            used_ref.add(i)
            used_cand.add(j)
            pairs.append((i, j))
    return sorted(pairs)


def diff_transcription(
    candidate: t.Sequence[NoteEvent],
    reference: t.Sequence[NoteEvent],
    timing_tol_ms: float = 30.0,
    dynamic_tol: float = 0.10,
    match_window_ms: float = 200.0,
) -> TranscriptionDiff:
    """
    Match candidate notes to reference notes of the same pitch, nearest onset first,
    and count timing differences over `timing_tol_ms` and velocity differences beyond
    `dynamic_tol` of the reference velocity. Leftover notes close in time but at a
    different pitch are counted as pitch mismatches.
    """
    window = max(match_window_ms, timing_tol_ms) / 1000.0
    pairs = _greedy_pairs(
        reference, candidate, range(len(reference)), range(len(candidate)), window, True
    )

    matched = tuple(MatchedNote(reference[i], candidate[j]) for i, j in pairs)
    timing_limit = timing_tol_ms + TIMING_SLACK_MS
    dynamic_limit = dynamic_tol + RATIO_SLACK
    timing = sum(abs(m.onset_delta_ms) > timing_limit for m in matched)
    dynamic = sum(abs(m.velocity_ratio - 1.0) > dynamic_limit for m in matched)

    ref_left = sorted(set(range(len(reference))) - {i for i, _ in pairs})
    cand_left = sorted(set(range(len(candidate))) - {j for _, j in pairs})
    mismatches = _greedy_pairs(reference, candidate, ref_left, cand_left, window, False)

    return TranscriptionDiff(
        matched=matched,
        unmatched_reference=tuple(reference[i] for i in ref_left),
        unmatched_candidate=tuple(candidate[j] for j in cand_left),
        timing_violations=int(timing),
        dynamic_violations=int(dynamic),
        pitch_mismatches=len(mismatches),
    )


def load_notes(path: str) -> tuple[list[NoteEvent], TempoMap]:
    with open(path, "rb") as f:
        return to_note_events(parse_smf(f.read()))

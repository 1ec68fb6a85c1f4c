#!/usr/bin/env python3
"""
GHZ-Share Export Module

CSV writers and readers for every artifact a scenario produces. Files are
UTF-8 with a header row and LF line endings; floats are written with repr
so that reading them back is lossless.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .analysis import (
    ComboFit, CorrelationEstimate, FringePoint, FringeScan, RunReport, VisibilityEstimate
)
from .correlations import Phase, PhaseSettings
from .devices import ClickCause
from .engine import SPECTRUM_RANGES
from .protocol import (
    AliceChoice, Announcement, BobChoice, CharlyChoice, EavesdropPoint, RoundRecord,
    SiftedBit, announce, sift
)

# Configure logging
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

PUBLIC_TRANSCRIPT_COLUMNS = ['slot', 'alpha_basis', 'beta', 'gamma', 'detected', 'sifted', 'l', 'j', 'k']
TRANSCRIPT_COLUMNS = PUBLIC_TRANSCRIPT_COLUMNS + ['alpha_prime', 'eve_touched', 'cause_bob', 'cause_charly']
KEY_COLUMNS = ['slot', 'l', 'i', 'j', 'k', 'accidental']
SPECTRA_COLUMNS = ['spectrum', 'bin', 'counts']
FRINGE_COLUMNS = ['phase_rad', 'combo', 'counts', 'duration_s']
FRINGE_FIT_COLUMNS = ['combo', 'offset', 'amplitude', 'phase0', 'visibility', 'visibility_std',
                      'phase0_reliable', 'offset_std', 'phase0_std']
E_VALUE_COLUMNS = ['combination', 'alice', 'bob', 'charly', 'e_value', 'std_error', 'rounds']
SWEEP_COLUMNS = ['interception_prob', 'detected_rounds', 'sifted_bits', 'errors', 'qber', 'qber_std',
                 'expected_qber', 'renormalized_attack_qber']
MEAN_ROW = 'mean'


class ExportError(Exception):
    """Custom exception for artifact export and import."""
    pass


def _fmt(value: object) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _opt_float(text: str) -> Optional[float]:
    return None if text == '' else float(text)


def _opt_int(text: str) -> Optional[int]:
    return None if text == '' else int(text)


def _write_rows(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w', encoding='utf-8', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(columns)
            count = 0
            for row in rows:
                writer.writerow([_fmt(value) for value in row])
                count += 1
    except OSError as e:
        logger.error(f"Failed to write {target}: {e}")
        raise ExportError(f"Failed to write {target}: {e}")
    logger.debug(f"Wrote {count} rows to {target}")
    return target


def _read_rows(path: PathLike, columns: Sequence[str]) -> List[Dict[str, str]]:
    try:
        with open(path, encoding='utf-8', newline='') as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None or list(reader.fieldnames) != list(columns):
                raise ExportError(f"{path}: unexpected header {reader.fieldnames}")
            return list(reader)
    except OSError as e:
        logger.error(f"Failed to read {path}: {e}")
        raise ExportError(f"Failed to read {path}: {e}")


# ============================================================================
# TRANSCRIPT AND KEYS
# ============================================================================

def _transcript_row(record: RoundRecord, public: bool) -> List[object]:
    bit = sift(record) if record.detected else None
    announcement = announce(record)
    row: List[object] = [
        record.slot, announcement.alpha_basis.value, announcement.beta.value, announcement.gamma.value,
        record.detected, bit is not None, bit.l if bit is not None else None,
        None if public else record.j, None if public else record.k,
    ]
    if not public:
        row += [
            record.alice.alpha_prime.value, record.eve_touched,
            record.bob.cause.value if record.bob.cause else None,
            record.charly.cause.value if record.charly.cause else None,
        ]
    return row


def write_transcript(path: PathLike, records: Iterable[RoundRecord], public: bool = False) -> Path:
    """
    Write one row per round.

    The public variant leaves j and k empty and omits private columns.
    """
    columns = PUBLIC_TRANSCRIPT_COLUMNS if public else TRANSCRIPT_COLUMNS
    return _write_rows(path, columns, (_transcript_row(r, public) for r in records))


def read_transcript(path: PathLike) -> List[RoundRecord]:
    """Read a full transcript back into round records."""
    records = []
    for row in _read_rows(path, TRANSCRIPT_COLUMNS):
        detected = row['detected'] == '1'
        bob_cause = ClickCause(row['cause_bob']) if row['cause_bob'] else None
        charly_cause = ClickCause(row['cause_charly']) if row['cause_charly'] else None
        records.append(RoundRecord(
            slot=int(row['slot']),
            alice=AliceChoice.from_alpha_prime(Phase(float(row['alpha_prime']))),
            bob=BobChoice(Phase(float(row['beta'])), _opt_int(row['j']), bob_cause),
            charly=CharlyChoice(Phase(float(row['gamma'])), _opt_int(row['k']), charly_cause),
            detected=detected,
            eve_touched=row['eve_touched'] == '1',
        ))
    return records


def read_public_transcript(path: PathLike) -> List[Tuple[Announcement, Optional[int]]]:
    """Read a public transcript as (announcement, l) pairs; l is None for unsifted rounds."""
    result = []
    for row in _read_rows(path, PUBLIC_TRANSCRIPT_COLUMNS):
        announcement = Announcement(slot=int(row['slot']), alpha_basis=Phase(float(row['alpha_basis'])),
                                    beta=Phase(float(row['beta'])), gamma=Phase(float(row['gamma'])),
                                    detected=row['detected'] == '1')
        result.append((announcement, _opt_int(row['l'])))
    return result


def write_keys(path: PathLike, bits: Iterable[SiftedBit]) -> Path:
    """Write sifted key material as signs (i, j, k, l) per sifted round."""
    return _write_rows(path, KEY_COLUMNS,
                       ([b.slot, b.l, b.alice_bit, b.bob_bit, b.charly_bit, b.accidental] for b in bits))


def read_keys(path: PathLike) -> List[SiftedBit]:
    return [
        SiftedBit(l=int(row['l']), alice_bit=int(row['i']), bob_bit=int(row['j']),
                  charly_bit=int(row['k']), slot=int(row['slot']), accidental=row['accidental'] == '1')
        for row in _read_rows(path, KEY_COLUMNS)
    ]


# ============================================================================
# SPECTRA, FRINGES, BELL VALUES, SWEEP
# ============================================================================

def write_spectra(path: PathLike, spectra: Dict[str, np.ndarray]) -> Path:
    """Time-difference histograms in units of the interferometer delay."""
    rows = []
    for name, (lo, _) in SPECTRUM_RANGES.items():
        for offset, count in enumerate(spectra.get(name, [])):
            rows.append([name, lo + offset, int(count)])
    return _write_rows(path, SPECTRA_COLUMNS, rows)


def read_spectra(path: PathLike) -> Dict[str, np.ndarray]:
    spectra = {name: np.zeros(hi - lo + 1, dtype=np.int64) for name, (lo, hi) in SPECTRUM_RANGES.items()}
    for row in _read_rows(path, SPECTRA_COLUMNS):
        name = row['spectrum']
        if name not in SPECTRUM_RANGES:
            raise ExportError(f"Unknown spectrum {name}")
        spectra[name][int(row['bin']) - SPECTRUM_RANGES[name][0]] = int(row['counts'])
    return spectra


def write_fringe(path: PathLike, scan: FringeScan) -> Path:
    rows = []
    for point in scan.points:
        for combo, count in point.counts.items():
            rows.append([point.phase.value, combo, count, point.duration])
    return _write_rows(path, FRINGE_COLUMNS, rows)


def read_fringe(path: PathLike) -> FringeScan:
    """Read a fringe scan; rows sharing phase and duration form one point, in file order."""
    grouped: Dict[Tuple[float, float], Dict[str, int]] = {}
    for row in _read_rows(path, FRINGE_COLUMNS):
        key = (float(row['phase_rad']), float(row['duration_s']))
        grouped.setdefault(key, {})[row['combo']] = int(row['counts'])
    return FringeScan(points=[FringePoint(phase=Phase(phase), counts=counts, duration=duration)
                              for (phase, duration), counts in grouped.items()])


def write_fringe_fit(path: PathLike, fits: Dict[str, ComboFit], mean: VisibilityEstimate) -> Path:
    rows: List[List[object]] = [
        [f.combo, f.offset, f.amplitude, f.phase0, f.visibility, f.visibility_std, f.phase0_reliable,
         f.offset_std, f.phase0_std]
        for f in fits.values()
    ]
    rows.append([MEAN_ROW, None, None, None, mean.value, mean.std_error, None, None, None])
    return _write_rows(path, FRINGE_FIT_COLUMNS, rows)


def read_fringe_fit(path: PathLike) -> Tuple[Dict[str, ComboFit], VisibilityEstimate]:
    fits = {}
    mean = None
    for row in _read_rows(path, FRINGE_FIT_COLUMNS):
        if row['combo'] == MEAN_ROW:
            mean = (float(row['visibility']), float(row['visibility_std']))
            continue
        fits[row['combo']] = ComboFit(
            combo=row['combo'], offset=float(row['offset']), amplitude=float(row['amplitude']),
            phase0=float(row['phase0']), visibility=float(row['visibility']),
            visibility_std=float(row['visibility_std']), phase0_reliable=row['phase0_reliable'] == '1',
            offset_std=float(row['offset_std']), phase0_std=float(row['phase0_std']),
        )
    if mean is None:
        raise ExportError(f"{path}: missing '{MEAN_ROW}' row")
    estimate = VisibilityEstimate(value=mean[0], std_error=mean[1],
                                  per_combination={c: (f.visibility, f.visibility_std) for c, f in fits.items()})
    return fits, estimate


def write_e_values(path: PathLike, table: Sequence[CorrelationEstimate]) -> Path:
    return _write_rows(path, E_VALUE_COLUMNS, (
        [n + 1, e.settings.alice.value, e.settings.bob.value, e.settings.charly.value,
         e.value, e.std_error, e.rounds]
        for n, e in enumerate(table)
    ))


def read_e_values(path: PathLike) -> List[CorrelationEstimate]:
    return [
        CorrelationEstimate(
            settings=PhaseSettings.of(float(row['alice']), float(row['bob']), float(row['charly'])),
            value=float(row['e_value']), std_error=float(row['std_error']), rounds=int(row['rounds']),
        )
        for row in _read_rows(path, E_VALUE_COLUMNS)
    ]


def write_sweep(path: PathLike, points: Iterable[EavesdropPoint]) -> Path:
    return _write_rows(path, SWEEP_COLUMNS, (
        [p.interception_prob, p.detected_rounds, p.sifted_bits, p.errors, p.qber, p.qber_std,
         p.expected_qber, p.renormalized_attack_qber]
        for p in points
    ))


def read_sweep(path: PathLike) -> List[EavesdropPoint]:
    return [
        EavesdropPoint(
            interception_prob=float(row['interception_prob']), detected_rounds=int(row['detected_rounds']),
            sifted_bits=int(row['sifted_bits']), errors=int(row['errors']), qber=_opt_float(row['qber']),
            qber_std=_opt_float(row['qber_std']), expected_qber=_opt_float(row['expected_qber']),
            renormalized_attack_qber=_opt_float(row['renormalized_attack_qber']),
        )
        for row in _read_rows(path, SWEEP_COLUMNS)
    ]


# ============================================================================
# REPORTS
# ============================================================================

def write_report(directory: PathLike, report: RunReport) -> Tuple[Path, Path]:
    """Write report.txt and a key/value report.csv."""
    base = Path(directory)
    text_path = base / 'report.txt'
    try:
        base.mkdir(parents=True, exist_ok=True)
        with open(text_path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(report.format_text())
    except OSError as e:
        logger.error(f"Failed to write {text_path}: {e}")
        raise ExportError(f"Failed to write {text_path}: {e}")
    csv_path = _write_rows(base / 'report.csv', ['key', 'value'], sorted(report.to_dict().items()))
    return text_path, csv_path


def write_text(path: PathLike, text: str) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
    except OSError as e:
        logger.error(f"Failed to write {target}: {e}")
        raise ExportError(f"Failed to write {target}: {e}")
    return target

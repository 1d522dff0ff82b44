"""CSV and ARFF serialisation of feature tables.

Numbers are written with ``repr`` (shortest round-trip form, always a '.'
decimal point), so export followed by parsing reproduces every value
bit for bit.
"""
from __future__ import annotations

import csv
import io
import re

from .errors import EmptyTable, SchemaError
from .features import NUMERIC, FeatureTable, FeatureVector
from .ingest import GENDERS, LABELS

KNOWN_NOMINALS = {"gender": GENDERS}
ID_COLUMNS = ("participant_id", "instance_id")


def _num(v: float) -> str:
    return repr(float(v))


def export_table(table: FeatureTable, fmt: str = "csv") -> bytes:
    if not table.rows:
        raise EmptyTable("cannot export an empty feature table")
    if fmt == "csv":
        return table_to_csv(table).encode("utf-8")
    if fmt == "arff":
        return table_to_arff(table).encode("utf-8")
    raise ValueError("format must be 'csv' or 'arff'")


def parse_table(data, fmt: str = "csv", granularity: str | None = None, name: str | None = None) -> FeatureTable:
    """Inverse of :func:`export_table`; CSV carries no metadata, so pass ``granularity``/``name``."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if fmt == "csv":
        return table_from_csv(text, granularity or "sentence", name or "features")
    if fmt == "arff":
        return table_from_arff(text)
    raise ValueError("format must be 'csv' or 'arff'")


def table_filename(table: FeatureTable, fmt: str) -> str:
    return f"features_{table.name}_{table.granularity}.{fmt}"


_FILENAME = re.compile(r"^features_(?P<name>.+)_(?P<granularity>event|sentence|scene|participant)\.(csv|arff)$")


def name_from_filename(filename: str) -> tuple[str, str] | None:
    """(name, granularity) encoded by :func:`table_filename`, or None."""
    m = _FILENAME.match(filename)
    return (m["name"], m["granularity"]) if m else None


# -- CSV -------------------------------------------------------------------------------

def table_to_csv(table: FeatureTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*ID_COLUMNS, *table.feature_names, "label"])
    for row in table.rows:
        cells = [row.participant_id, row.instance_id]
        for name, kind in table.schema:
            v = row.values[name]
            cells.append(_num(v) if kind == NUMERIC else v)
        cells.append(row.label)
        w.writerow(cells)
    return buf.getvalue()


def table_from_csv(text: str, granularity: str = "sentence", name: str = "features") -> FeatureTable:
    """Parse a CSV export; numeric vs nominal columns are inferred from the values."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyTable("empty CSV") from None
    if header[:2] != list(ID_COLUMNS) or header[-1] != "label":
        raise SchemaError("CSV must start with participant_id,instance_id and end with label")
    features = header[2:-1]
    raw = [r for r in reader if r]
    for i, r in enumerate(raw, start=2):
        if len(r) != len(header):
            raise SchemaError(f"line {i}: expected {len(header)} fields, got {len(r)}")
    schema = []
    for j, fname in enumerate(features, start=2):
        column = [r[j] for r in raw]
        if fname in KNOWN_NOMINALS:
            schema.append((fname, KNOWN_NOMINALS[fname]))
        elif all(_is_number(v) for v in column):
            schema.append((fname, NUMERIC))
        else:
            schema.append((fname, tuple(sorted(set(column)))))
    rows = []
    for r in raw:
        values = {}
        for (fname, kind), cell in zip(schema, r[2:-1]):
            values[fname] = float(cell) if kind == NUMERIC else cell
        rows.append(FeatureVector(r[0], r[1], values, r[-1]))
    return FeatureTable(schema, rows, granularity, name)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


# -- ARFF ------------------------------------------------------------------------------

_BARE = re.compile(r"^[A-Za-z0-9_.\-+]+$")


def _quote(s: str) -> str:
    if _BARE.match(s):
        return s
    return "'" + s.replace("\\", "\\\\").replace("'", "\\'") + "'"


def table_to_arff(table: FeatureTable) -> str:
    lines = [f"@relation {_quote(f'features_{table.name}_{table.granularity}')}", ""]
    lines.append("@attribute participant_id string")
    lines.append("@attribute instance_id string")
    for name, kind in table.schema:
        if kind == NUMERIC:
            lines.append(f"@attribute {_quote(name)} numeric")
        else:
            lines.append(f"@attribute {_quote(name)} {{{','.join(_quote(v) for v in kind)}}}")
    lines.append(f"@attribute label {{{','.join(LABELS)}}}")
    lines += ["", "@data"]
    for row in table.rows:
        cells = [_quote(row.participant_id), _quote(row.instance_id)]
        for name, kind in table.schema:
            v = row.values[name]
            cells.append(_num(v) if kind == NUMERIC else _quote(v))
        cells.append(row.label)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _split_arff(line: str) -> list[str]:
    """Split a comma-separated ARFF line honouring single/double quotes."""
    out, cur, quote, i = [], [], None, 0
    while i < len(line):
        ch = line[i]
        if quote:
            if ch == "\\" and i + 1 < len(line):
                cur.append(line[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
            else:
                cur.append(ch)
        elif ch in "'\"":
            quote = ch
        elif ch == ",":
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
        i += 1
    out.append("".join(cur).strip())
    return out


_ATTR = re.compile(r"^@attribute\s+('(?:[^'\\]|\\.)*'|\S+)\s+(.+)$", re.IGNORECASE)


def _unquote(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        return _split_arff(s)[0]
    return s


def table_from_arff(text: str) -> FeatureTable:
    relation = None
    attrs: list[tuple[str, object]] = []
    data_lines: list[str] = []
    in_data = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if in_data:
            data_lines.append(line)
            continue
        low = line.lower()
        if low.startswith("@relation"):
            relation = _unquote(line.split(None, 1)[1])
        elif low.startswith("@attribute"):
            m = _ATTR.match(line)
            if not m:
                raise SchemaError(f"bad attribute line: {line}")
            name, typ = _unquote(m.group(1)), m.group(2).strip()
            if typ.startswith("{"):
                kind: object = tuple(_split_arff(typ.strip("{}")))
            elif typ.lower() in ("numeric", "real", "integer"):
                kind = NUMERIC
            elif typ.lower() == "string":
                kind = "string"
            else:
                raise SchemaError(f"unsupported attribute type {typ!r}")
            attrs.append((name, kind))
        elif low.startswith("@data"):
            in_data = True
    names = [a for a, _ in attrs]
    if names[:2] != list(ID_COLUMNS) or names[-1] != "label":
        raise SchemaError("ARFF must declare participant_id, instance_id first and label last")
    schema = attrs[2:-1]
    rows = []
    for line in data_lines:
        cells = _split_arff(line)
        if len(cells) != len(attrs):
            raise SchemaError(f"data row has {len(cells)} values, expected {len(attrs)}")
        values = {}
        for (fname, kind), cell in zip(schema, cells[2:-1]):
            values[fname] = float(cell) if kind == NUMERIC else cell
        rows.append(FeatureVector(cells[0], cells[1], values, cells[-1]))
    name, granularity = "features", "sentence"
    if relation and relation.startswith("features_"):
        stem, _, granularity = relation[len("features_"):].rpartition("_")
        name = stem or name
    return FeatureTable(schema, rows, granularity, name)


__all__ = ["export_table", "parse_table", "table_to_csv", "table_from_csv", "table_to_arff", "table_from_arff",
           "table_filename", "name_from_filename"]

"""Writer and reader for the CPLEX LP text format.

Only the subset needed for convex MIQPs is handled: a linear objective with a
``[ ... ] / 2`` quadratic block and an optional constant, ``Subject To`` rows,
``Bounds`` and ``Binaries``. Ranged rows ``l <= a'z <= u`` are written as two
rows named ``<row>_lo`` / ``<row>_hi`` and merged again on read, so a written
problem re-imports with the same row set. Coefficients are printed with
``repr`` so the round trip is exact.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..problem import MIQPProblem

_LINE_WIDTH = 100


def _fmt(v: float) -> str:
    v = float(v)
    if v == 0:
        return "0"
    return repr(v)


def _terms(coefs, names) -> list[str]:
    out = []
    for a, name in zip(coefs, names):
        a = float(a)
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        out.append(f"{sign} {_fmt(abs(a))} {name}")
    return out


def _wrap(tokens: list[str], indent: str = "   ") -> str:
    lines, cur = [], indent
    for tok in tokens:
        if len(cur) + len(tok) + 1 > _LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = indent
        cur += " " + tok
    lines.append(cur)
    return "\n".join(lines)


def _check_names(names):
    bad = [n for n in names if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.\[\]]*", n)]
    if bad:
        raise ValueError(f"names not representable in LP format: {bad[:3]}")


def write_lp(problem: MIQPProblem, path) -> Path:
    """Write ``problem`` to ``path``. Returns the path written."""
    p = problem
    names = list(p.var_names)
    rnames = list(p.row_names)
    _check_names(names)
    _check_names(rnames)
    chunks = [f"\\ {p.n_vars} variables, {p.n_rows} rows, {p.n_bin} binaries", "Minimize"]
    obj = ["obj:"] + _terms(p.c, names)
    if p.offset:
        obj.append(f"{'-' if p.offset < 0 else '+'} {_fmt(abs(p.offset))}")
    Q = sp.triu(sp.coo_matrix(p.Q)).tocoo()
    order = np.lexsort((Q.col, Q.row))
    quad = []
    for i, j, v in zip(Q.row[order], Q.col[order], Q.data[order]):
        if v == 0:
            continue
        coef = v if i == j else 2.0 * v
        sign = "-" if coef < 0 else "+"
        mono = f"{names[i]} ^ 2" if i == j else f"{names[i]} * {names[j]}"
        quad.append(f"{sign} {_fmt(abs(coef))} {mono}")
    if quad:
        quad[0] = quad[0][2:] if quad[0].startswith("+ ") else quad[0]
        obj += ["+ ["] + quad + ["] / 2"]
    if len(obj) == 1:
        obj.append("0 " + names[0] if names else "0")
    chunks.append(_wrap(obj, indent=""))

    A = sp.csr_matrix(p.A)
    rows = []
    for r in range(p.n_rows):
        lo, hi = p.row_lower[r], p.row_upper[r]
        if np.isinf(lo) and np.isinf(hi):
            continue
        cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
        vals = A.data[A.indptr[r]:A.indptr[r + 1]]
        lhs = _terms(vals, [names[c] for c in cols]) or [f"0 {names[0]}"]
        if lo == hi:
            rows.append(_wrap([f"{rnames[r]}:"] + lhs + ["=", _fmt(hi)]))
        elif np.isinf(lo):
            rows.append(_wrap([f"{rnames[r]}:"] + lhs + ["<=", _fmt(hi)]))
        elif np.isinf(hi):
            rows.append(_wrap([f"{rnames[r]}:"] + lhs + [">=", _fmt(lo)]))
        else:
            rows.append(_wrap([f"{rnames[r]}_lo:"] + lhs + [">=", _fmt(lo)]))
            rows.append(_wrap([f"{rnames[r]}_hi:"] + lhs + ["<=", _fmt(hi)]))
    if rows:
        chunks.append("Subject To")
        chunks.extend(rows)

    chunks.append("Bounds")
    is_bin = np.zeros(p.n_vars, dtype=bool)
    is_bin[p.binary] = True
    for i, name in enumerate(names):
        lo, hi = p.var_lower[i], p.var_upper[i]
        if np.isinf(lo) and np.isinf(hi):
            chunks.append(f"   {name} free")
        elif lo == hi:
            chunks.append(f"   {name} = {_fmt(lo)}")
        else:
            left = "-inf" if np.isinf(lo) else _fmt(lo)
            right = "+inf" if np.isinf(hi) else _fmt(hi)
            chunks.append(f"   {left} <= {name} <= {right}")
    if p.n_bin:
        chunks.append("Binaries")
        chunks.extend(f"   {names[i]}" for i in p.binary)
    chunks.append("End")
    path = Path(path)
    path.write_text("\n".join(chunks) + "\n")
    return path


_SECTION = re.compile(
    r"^(minimize|maximize|minimum|maximum|subject to|such that|st|s\.t\.|bounds|bound|"
    r"binaries|binary|bin|generals|general|end)$",
    re.I,
)


def _num(tok: str) -> float:
    t = tok.lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return np.inf
    if t in ("-inf", "-infinity"):
        return -np.inf
    return float(tok)


def _parse_linear(tokens):
    """Parse ``[+|-] coef name ...`` into ({name: coef}, constant)."""
    coefs: dict[str, float] = {}
    const = 0.0
    i = 0
    sign = 1.0
    while i < len(tokens):
        t = tokens[i]
        if t in ("+", "-"):
            sign = 1.0 if t == "+" else -1.0
            i += 1
            continue
        try:
            val = float(t)
        except ValueError:
            coefs[t] = coefs.get(t, 0.0) + sign
            sign = 1.0
            i += 1
            continue
        if i + 1 < len(tokens) and tokens[i + 1] not in ("+", "-"):
            name = tokens[i + 1]
            coefs[name] = coefs.get(name, 0.0) + sign * val
            i += 2
        else:
            const += sign * val
            i += 1
        sign = 1.0
    return coefs, const


def _tokenize(text: str) -> list[str]:
    text = text.replace("[", " [ ").replace("]", " ] ").replace("^", " ^ ").replace("*", " * ")
    text = re.sub(r"(<=|>=|=<|=>)", r" \1 ", text)
    text = re.sub(r"(?<![<>=])=(?![<>=])", " = ", text)
    return text.split()


def read_lp(path) -> MIQPProblem:
    """Parse a file written by :func:`write_lp` (or a compatible LP file)."""
    sections: dict[str, list[str]] = {"obj": [], "st": [], "bounds": [], "bin": []}
    current = None
    for raw in Path(path).read_text().splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if _SECTION.match(key):
            if key.startswith("min"):
                current = "obj"
            elif key.startswith("max"):
                raise ValueError("maximization problems are not supported")
            elif key in ("subject to", "such that", "st", "s.t."):
                current = "st"
            elif key.startswith("bound"):
                current = "bounds"
            elif key.startswith("bin"):
                current = "bin"
            elif key.startswith("general"):
                raise ValueError("general integer variables are not supported")
            else:
                current = None
            continue
        if current is None:
            raise ValueError(f"content outside any section: {raw!r}")
        sections[current].append(line)

    names: list[str] = []
    index: dict[str, int] = {}

    def var(name):
        if name not in index:
            index[name] = len(names)
            names.append(name)
        return index[name]

    # declaration order follows the Bounds section, which lists every column
    bound_specs = []
    for line in sections["bounds"]:
        toks = _tokenize(line)
        bound_specs.append(toks)
        for t in toks:
            if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.\[\]]*", t) and t.lower() not in (
                    "free", "inf", "infinity"):
                var(t)

    obj_tokens = _tokenize(" ".join(sections["obj"]))
    if obj_tokens and obj_tokens[0].endswith(":"):
        obj_tokens = obj_tokens[1:]
    elif len(obj_tokens) > 1 and obj_tokens[1] == ":":
        obj_tokens = obj_tokens[2:]
    quad_tokens: list[str] = []
    if "[" in obj_tokens:
        a = obj_tokens.index("[")
        b = obj_tokens.index("]")
        quad_tokens = obj_tokens[a + 1:b]
        tail = obj_tokens[b + 1:]
        if tail[:2] != ["/", "2"]:
            raise ValueError("quadratic objective block must be divided by 2")
        lin_tokens = obj_tokens[:a] + tail[2:]
        if a > 0 and obj_tokens[a - 1] == "-":
            raise ValueError("negated quadratic block is not supported")
        if lin_tokens and lin_tokens[-1] in ("+", "-"):
            lin_tokens = lin_tokens[:-1]
    else:
        lin_tokens = obj_tokens
    lin, offset = _parse_linear(lin_tokens)
    for n in lin:
        var(n)
    qentries = []
    i = 0
    sign = 1.0
    while i < len(quad_tokens):
        t = quad_tokens[i]
        if t in ("+", "-"):
            sign = 1.0 if t == "+" else -1.0
            i += 1
            continue
        try:
            coef = float(t)
            i += 1
        except ValueError:
            coef = 1.0
        a = quad_tokens[i]
        if i + 1 < len(quad_tokens) and quad_tokens[i + 1] == "^":
            qentries.append((a, a, sign * coef))
            i += 3
        elif i + 1 < len(quad_tokens) and quad_tokens[i + 1] == "*":
            qentries.append((a, quad_tokens[i + 2], sign * coef))
            i += 3
        else:
            raise ValueError(f"bad quadratic term near {a!r}")
        sign = 1.0
    for a, b, _ in qentries:
        var(a)
        var(b)

    # constraints
    rows = []
    buf = ""
    for line in sections["st"]:
        buf = f"{buf} {line}" if buf else line
        if re.search(r"(<=|>=|=<|=>|=)\s*[-+]?[\d.]+(e[-+]?\d+)?\s*$|(<=|>=|=)\s*[-+]?inf\s*$",
                     buf, re.I):
            rows.append(buf)
            buf = ""
    if buf:
        raise ValueError(f"unterminated constraint: {buf!r}")
    parsed = []
    for text in rows:
        name, _, body = text.partition(":")
        if not _:
            raise ValueError(f"unnamed constraint: {text!r}")
        toks = _tokenize(body)
        op_pos = next(k for k, t in enumerate(toks) if t in ("<=", ">=", "=<", "=>", "="))
        op = {"=<": "<=", "=>": ">="}.get(toks[op_pos], toks[op_pos])
        coefs, const = _parse_linear(toks[:op_pos])
        rhs = _num(toks[op_pos + 1]) - const
        for n in coefs:
            var(n)
        parsed.append((name.strip(), coefs, op, rhs))

    merged: dict[str, list] = {}
    order: list[str] = []
    for name, coefs, op, rhs in parsed:
        base = name
        if name.endswith("_lo") or name.endswith("_hi"):
            base = name[:-3]
        if base not in merged:
            merged[base] = [coefs, -np.inf, np.inf]
            order.append(base)
        entry = merged[base]
        if op == "<=":
            entry[2] = min(entry[2], rhs)
        elif op == ">=":
            entry[1] = max(entry[1], rhs)
        else:
            entry[1] = entry[2] = rhs

    binaries = []
    for line in sections["bin"]:
        for n in line.split():
            binaries.append(var(n))

    n = len(names)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    ub[binaries] = 1.0
    for toks in bound_specs:
        if len(toks) == 2 and toks[1].lower() == "free":
            k = index[toks[0]]
            lb[k], ub[k] = -np.inf, np.inf
        elif len(toks) == 5:
            k = index[toks[2]]
            lb[k] = _num(toks[0])
            ub[k] = _num(toks[4])
        elif len(toks) == 3:
            if toks[0] in index:
                k = index[toks[0]]
                v = _num(toks[2])
                if toks[1] == "=":
                    lb[k] = ub[k] = v
                elif toks[1] == "<=":
                    ub[k] = v
                else:
                    lb[k] = v
            else:
                k = index[toks[2]]
                v = _num(toks[0])
                if toks[1] == "<=":
                    lb[k] = v
                else:
                    ub[k] = v
        else:
            raise ValueError(f"cannot parse bound {' '.join(toks)!r}")

    c = np.zeros(n)
    for nm, v in lin.items():
        c[index[nm]] += v
    qi, qj, qv = [], [], []
    for a, b, v in qentries:
        ia, ib = index[a], index[b]
        if ia == ib:
            qi.append(ia); qj.append(ia); qv.append(v)
        else:
            qi += [ia, ib]; qj += [ib, ia]; qv += [v / 2.0, v / 2.0]
    Q = sp.csc_matrix((qv, (qi, qj)), shape=(n, n))
    ri, rj, rv = [], [], []
    rl, ru = [], []
    for r, base in enumerate(order):
        coefs, lo, hi = merged[base]
        for nm, v in coefs.items():
            ri.append(r); rj.append(index[nm]); rv.append(v)
        rl.append(lo)
        ru.append(hi)
    A = sp.csr_matrix((rv, (ri, rj)), shape=(len(order), n))
    return MIQPProblem(Q=Q, c=c, A=A, row_lower=np.array(rl), row_upper=np.array(ru),
                       var_lower=lb, var_upper=ub, binary=np.array(binaries, dtype=int),
                       offset=offset, var_names=names, row_names=order)


def export_problem(problem: MIQPProblem, path) -> Path:
    return write_lp(problem, path)

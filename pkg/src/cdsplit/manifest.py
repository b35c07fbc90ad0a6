"""Manifest files: a strict line-oriented format describing a manifold,
its density, and the numeric blocks the report suites need.

Format: ``[section]`` headers with ``key = value`` lines; ``#`` starts a
comment.  Scalar expressions use a minimal arithmetic grammar (+ - * / ^,
parentheses, the variables r and y1..y_{n-1}, the functions sin cos exp log
sqrt cosh sinh, numeric literals).  Expressions are differentiated
symbolically, so manifest-built geometries carry analytic partials.

Unknown sections or keys are rejected; every expression is trial-evaluated
at the grid center during validation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dc_field

import numpy as np

from .chart_core import MetricSpec, ScalarField, VectorField
from .comparison_suite import RadialModel
from .errors import ParseError, ValidationError
from .warped_products import (
    EuclideanFiber,
    SphereFiber,
    SplitSpaceSpec,
    TorusFiber,
    TwistedProductSpec,
)

# ---------------------------------------------------------------------------
# expression grammar
# ---------------------------------------------------------------------------

_FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "cosh": math.cosh,
    "sinh": math.sinh,
}

_TOKEN_RE = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
                       r"|\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|([-+*/^()]))")


def _tokenize(text: str, line: int):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].lstrip()
            if not rest:
                break
            raise ParseError(f"unexpected character {rest[0]!r} in expression",
                             line=line, column=pos + 1)
        num, ident, op = m.groups()
        col = m.start() + 1
        if num is not None:
            out.append(("num", float(num), col))
        elif ident is not None:
            out.append(("ident", ident, col))
        else:
            out.append(("op", op, col))
        pos = m.end()
    out.append(("end", "", len(text) + 1))
    return out


class _Parser:
    """Pratt parser for the scalar expression grammar."""

    _BINDING = {"+": (1, 2), "-": (1, 2), "*": (3, 4), "/": (3, 4), "^": (8, 7)}

    def __init__(self, tokens, variables, line):
        self.toks = tokens
        self.i = 0
        self.variables = variables
        self.line = line

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, msg, col):
        raise ParseError(msg, line=self.line, column=col)

    def parse(self):
        ast = self.expr(0)
        kind, val, col = self.peek()
        if kind != "end":
            self.fail(f"unexpected trailing token {val!r}", col)
        return ast

    def expr(self, min_bp):
        kind, val, col = self.next()
        if kind == "num":
            lhs = ("num", val)
        elif kind == "ident":
            if val in _FUNCTIONS:
                k2, v2, c2 = self.next()
                if (k2, v2) != ("op", "("):
                    self.fail(f"function {val!r} needs parenthesized argument", c2)
                arg = self.expr(0)
                k3, v3, c3 = self.next()
                if (k3, v3) != ("op", ")"):
                    self.fail("missing closing parenthesis", c3)
                lhs = ("call", val, arg)
            elif val in self.variables:
                lhs = ("var", val)
            else:
                self.fail(f"unknown name {val!r} (variables: {sorted(self.variables)})", col)
        elif (kind, val) == ("op", "("):
            lhs = self.expr(0)
            k2, v2, c2 = self.next()
            if (k2, v2) != ("op", ")"):
                self.fail("missing closing parenthesis", c2)
        elif (kind, val) == ("op", "-"):
            lhs = ("neg", self.expr(6))
        elif (kind, val) == ("op", "+"):
            lhs = self.expr(6)
        else:
            self.fail(f"unexpected token {val!r}", col)
        while True:
            kind, val, col = self.peek()
            if kind != "op" or val not in self._BINDING:
                break
            lbp, rbp = self._BINDING[val]
            if lbp < min_bp:
                break
            self.next()
            rhs = self.expr(rbp)
            lhs = (val, lhs, rhs)
        return lhs


def parse_expression(text: str, variables, line: int = 1):
    """Parse an expression into an AST over the given variable names."""
    return _Parser(_tokenize(text, line), frozenset(variables), line).parse()


def eval_ast(ast, env) -> float:
    op = ast[0]
    if op == "num":
        return ast[1]
    if op == "var":
        return env[ast[1]]
    if op == "neg":
        return -eval_ast(ast[1], env)
    if op == "call":
        return _FUNCTIONS[ast[1]](eval_ast(ast[2], env))
    a = eval_ast(ast[1], env)
    b = eval_ast(ast[2], env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "^":
        return a ** b
    raise AssertionError(f"unhandled node {op!r}")


def _num(v):
    return ("num", float(v))


_ZERO = _num(0.0)
_ONE = _num(1.0)


def _is_num(ast, v=None):
    return ast[0] == "num" and (v is None or ast[1] == v)


def simplify(ast):
    op = ast[0]
    if op in ("num", "var"):
        return ast
    if op == "neg":
        a = simplify(ast[1])
        if _is_num(a):
            return _num(-a[1])
        return ("neg", a)
    if op == "call":
        a = simplify(ast[2])
        if _is_num(a):
            return _num(_FUNCTIONS[ast[1]](a[1]))
        return ("call", ast[1], a)
    a, b = simplify(ast[1]), simplify(ast[2])
    if _is_num(a) and _is_num(b):
        return _num(eval_ast((op, a, b), {}))
    if op == "+":
        if _is_num(a, 0.0):
            return b
        if _is_num(b, 0.0):
            return a
    elif op == "-":
        if _is_num(b, 0.0):
            return a
        if _is_num(a, 0.0):
            return simplify(("neg", b))
    elif op == "*":
        if _is_num(a, 0.0) or _is_num(b, 0.0):
            return _ZERO
        if _is_num(a, 1.0):
            return b
        if _is_num(b, 1.0):
            return a
    elif op == "/":
        if _is_num(a, 0.0):
            return _ZERO
        if _is_num(b, 1.0):
            return a
    elif op == "^":
        if _is_num(b, 1.0):
            return a
        if _is_num(b, 0.0):
            return _ONE
    return (op, a, b)


def diff(ast, var: str):
    """Symbolic derivative of the AST with respect to ``var``."""
    op = ast[0]
    if op == "num":
        return _ZERO
    if op == "var":
        return _ONE if ast[1] == var else _ZERO
    if op == "neg":
        return simplify(("neg", diff(ast[1], var)))
    if op == "call":
        fn, arg = ast[1], ast[2]
        da = diff(arg, var)
        if fn == "sin":
            outer = ("call", "cos", arg)
        elif fn == "cos":
            outer = ("neg", ("call", "sin", arg))
        elif fn == "exp":
            outer = ("call", "exp", arg)
        elif fn == "log":
            outer = ("/", _ONE, arg)
        elif fn == "sqrt":
            outer = ("/", _num(0.5), ("call", "sqrt", arg))
        elif fn == "cosh":
            outer = ("call", "sinh", arg)
        elif fn == "sinh":
            outer = ("call", "cosh", arg)
        else:  # pragma: no cover
            raise AssertionError(fn)
        return simplify(("*", outer, da))
    a, b = ast[1], ast[2]
    da, db = diff(a, var), diff(b, var)
    if op == "+":
        return simplify(("+", da, db))
    if op == "-":
        return simplify(("-", da, db))
    if op == "*":
        return simplify(("+", ("*", da, b), ("*", a, db)))
    if op == "/":
        return simplify(("/", ("-", ("*", da, b), ("*", a, db)), ("^", b, _num(2.0))))
    if op == "^":
        if _is_num(b):
            return simplify(("*", ("*", b, ("^", a, _num(b[1] - 1.0))), da))
        if _is_num(a):
            return simplify(("*", ("*", ("^", a, b), ("call", "log", a)), db))
        # general a^b = exp(b log a)
        inner = ("+", ("*", db, ("call", "log", a)), ("/", ("*", b, da), a))
        return simplify(("*", ("^", a, b), inner))
    raise AssertionError(f"unhandled node {op!r}")


@dataclass(frozen=True)
class Expression:
    """A parsed expression with its variable list and cached derivatives."""

    text: str
    ast: tuple
    variables: tuple[str, ...]

    def __call__(self, *values) -> float:
        return eval_ast(self.ast, dict(zip(self.variables, values)))

    def derivative(self, var: str) -> "Expression":
        return Expression(text=f"d/d{var}({self.text})", ast=simplify(diff(self.ast, var)),
                          variables=self.variables)


def compile_expression(text: str, variables, line: int = 1) -> Expression:
    ast = simplify(parse_expression(text, variables, line))
    return Expression(text=text.strip(), ast=ast, variables=tuple(variables))


def expression_scalar_field(expr: Expression) -> ScalarField:
    """ScalarField over the expression's variables with analytic partials."""
    names = expr.variables
    grads = [expr.derivative(v) for v in names]
    hesses = [[grads[i].derivative(v) for v in names] for i in range(len(names))]

    def value(p):
        env = dict(zip(names, p))
        return eval_ast(expr.ast, env)

    def grad(p):
        env = dict(zip(names, p))
        return np.array([eval_ast(g.ast, env) for g in grads])

    def hess(p):
        env = dict(zip(names, p))
        n = len(names)
        out = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = eval_ast(hesses[i][j].ast, env)
        return 0.5 * (out + out.T)

    return ScalarField(value=value, grad=grad, hess=hess)


# ---------------------------------------------------------------------------
# manifest text parsing
# ---------------------------------------------------------------------------

_SECTION_RE = re.compile(r"^\[([A-Za-z_][A-Za-z_0-9]*)\]\s*$")
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(.*?)\s*$")


def _read_sections(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = _SECTION_RE.match(line.strip())
        if m:
            name = m.group(1)
            if name in sections:
                raise ParseError(f"duplicate section [{name}]", line=lineno)
            sections[name] = {}
            current = name
            continue
        m = _KEY_RE.match(line.strip())
        if m:
            if current is None:
                raise ParseError("key outside any [section]", line=lineno, column=1)
            key, value = m.group(1), m.group(2)
            if key in sections[current]:
                raise ParseError(f"duplicate key {key!r} in [{current}]", line=lineno)
            sections[current][key] = (value, lineno)
            continue
        raise ParseError(f"cannot parse line: {raw.strip()!r}", line=lineno, column=1)
    return sections


KINDS = ("general", "split", "twisted", "radial_model")

_SECTION_KEYS = {
    "manifold": {"name", "kind", "dim"},
    "phi": {"expr"},
    "psi": {"expr"},
    "f_L": {"expr"},
    "fiber": {"type", "einstein_constant", "periods", "box"},
    "density": None,  # f or X1..Xn, checked dynamically
    "metric": None,   # gij entries, checked dynamically
    "grid": {"r_min", "r_max", "r_count", "fiber_count", "y_min", "y_max"},
    "numeric": {"dt", "tol_cd", "fd1", "fd2", "fd3"},
    "cd": {"lambda", "N"},
    "geodesic": {"start", "velocity", "T"},
    "riccati": {"a", "y0", "y0p", "t_max"},
    "compare": {"rho_min", "rho_max", "count"},
    "bochner": {"points"},
}

_KIND_REQUIRED = {
    "split": ("phi", "fiber"),
    "twisted": ("psi", "fiber"),
    "radial_model": ("density",),
    "general": ("metric", "density"),
}

_KIND_FORBIDDEN = {
    "split": ("psi", "metric", "density"),
    "twisted": ("phi", "metric"),
    "radial_model": ("phi", "psi", "fiber", "metric"),
    "general": ("phi", "psi", "fiber"),
}


@dataclass(frozen=True)
class ManifoldManifest:
    """Validated manifest: kind, dimension, expression blocks, numeric knobs."""

    name: str
    kind: str
    dim: int
    blocks: dict = dc_field(default_factory=dict)      # parsed expressions per block
    grid: dict = dc_field(default_factory=dict)
    numeric: dict = dc_field(default_factory=dict)
    cd: dict = dc_field(default_factory=dict)
    extras: dict = dc_field(default_factory=dict)      # geodesic / riccati / compare / bochner
    source_text: str = ""


def _float_value(sections, section, key, default=None, required=False):
    sec = sections.get(section, {})
    if key not in sec:
        if required:
            raise ValidationError("missing required key", key=f"[{section}] {key}")
        return default
    text, lineno = sec[key]
    try:
        return float(text)
    except ValueError as exc:
        raise ValidationError(f"expected a number, got {text!r}",
                              key=f"[{section}] {key}") from exc


def _int_value(sections, section, key, default=None, required=False):
    v = _float_value(sections, section, key, default=default, required=required)
    if v is None:
        return None
    if v != int(v):
        raise ValidationError(f"expected an integer, got {v!r}", key=f"[{section}] {key}")
    return int(v)


def _float_list(sections, section, key, required=False):
    sec = sections.get(section, {})
    if key not in sec:
        if required:
            raise ValidationError("missing required key", key=f"[{section}] {key}")
        return None
    text, lineno = sec[key]
    try:
        return [float(part) for part in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}",
                              key=f"[{section}] {key}") from exc


def parse_manifest(path) -> ManifoldManifest:
    """Read, parse, and validate a manifest file (strict keys, trial
    evaluation of every expression at the grid center)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    sections = _read_sections(text)

    if "manifold" not in sections:
        raise ValidationError("missing required section", key="[manifold]")
    man = sections["manifold"]
    for key in man:
        if key not in _SECTION_KEYS["manifold"]:
            raise ValidationError("unknown key", key=f"[manifold] {key}")
    if "kind" not in man:
        raise ValidationError("missing required key", key="[manifold] kind")
    kind = man["kind"][0]
    if kind not in KINDS:
        raise ValidationError(f"unknown kind {kind!r}; expected one of {KINDS}",
                              key="[manifold] kind")
    dim = _int_value(sections, "manifold", "dim", required=True)
    if dim < 2:
        raise ValidationError("dimension must be at least 2", key="[manifold] dim")
    name = man.get("name", (f"unnamed-{kind}", 0))[0]

    # strict section and key checking
    fiber_dim = dim - 1
    y_names = tuple(f"y{i + 1}" for i in range(fiber_dim))
    vec_names = tuple(f"X{i + 1}" for i in range(dim))
    for sec_name, content in sections.items():
        if sec_name not in _SECTION_KEYS:
            raise ValidationError("unknown section", key=f"[{sec_name}]")
        allowed = _SECTION_KEYS[sec_name]
        if allowed is None:
            if sec_name == "density":
                ok = {"f"} | set(vec_names)
            else:  # metric
                ok = {f"g{i + 1}{j + 1}" for i in range(dim) for j in range(dim)}
            for key in content:
                if key not in ok:
                    raise ValidationError("unknown key", key=f"[{sec_name}] {key}")
        else:
            for key in content:
                if key not in allowed:
                    raise ValidationError("unknown key", key=f"[{sec_name}] {key}")

    for sec_name in _KIND_REQUIRED[kind]:
        if sec_name not in sections:
            raise ValidationError(f"kind {kind!r} requires section [{sec_name}]",
                                  key=f"[{sec_name}]")
    for sec_name in _KIND_FORBIDDEN[kind]:
        if sec_name in sections:
            raise ValidationError(f"kind {kind!r} does not accept section [{sec_name}]",
                                  key=f"[{sec_name}]")

    # numeric and grid blocks
    grid = {
        "r_min": _float_value(sections, "grid", "r_min", -10.0),
        "r_max": _float_value(sections, "grid", "r_max", 10.0),
        "r_count": _int_value(sections, "grid", "r_count", 201),
        "fiber_count": _int_value(sections, "grid", "fiber_count", 9),
        "y_min": _float_value(sections, "grid", "y_min", None),
        "y_max": _float_value(sections, "grid", "y_max", None),
    }
    if grid["r_min"] >= grid["r_max"]:
        raise ValidationError("r_min must be below r_max", key="[grid] r_min")
    numeric = {
        "dt": _float_value(sections, "numeric", "dt", 1e-3),
        "tol_cd": _float_value(sections, "numeric", "tol_cd", 1e-7),
        "fd1": _float_value(sections, "numeric", "fd1", 1e-5),
        "fd2": _float_value(sections, "numeric", "fd2", 1e-4),
        "fd3": _float_value(sections, "numeric", "fd3", 1e-3),
    }

    cd = {}
    if "cd" in sections:
        lam = _float_value(sections, "cd", "lambda", 0.0)
        n_text = sections["cd"].get("N", ("1", 0))[0]
        if n_text in ("inf", "+inf", "infinity"):
            N = math.inf
        else:
            try:
                N = float(n_text)
            except ValueError as exc:
                raise ValidationError(f"expected a number or 'inf', got {n_text!r}",
                                      key="[cd] N") from exc
        if N == dim:
            raise ValidationError(
                f"N = {n_text} equals the manifold dimension: the generalized-Ricci "
                f"denominator N - n vanishes there, so the condition is undefined",
                key="[cd] N")
        cd = {"lambda": lam, "N": N}

    # expression blocks
    blocks: dict = {}
    if kind == "split":
        expr_text, lineno = _require_expr(sections, "phi")
        blocks["phi"] = compile_expression(expr_text, ("r",), lineno)
        if "f_L" in sections:
            expr_text, lineno = _require_expr(sections, "f_L")
            blocks["f_L"] = compile_expression(expr_text, y_names, lineno)
        blocks["fiber"] = _parse_fiber(sections, fiber_dim)
    elif kind == "twisted":
        expr_text, lineno = _require_expr(sections, "psi")
        blocks["psi"] = compile_expression(expr_text, ("r",) + y_names, lineno)
        blocks["fiber"] = _parse_fiber(sections, fiber_dim)
        if "density" in sections:
            blocks["density"] = _parse_density(sections, dim, ("r",) + y_names, vec_names)
    elif kind == "radial_model":
        blocks["density"] = _parse_density(sections, dim, ("r",), vec_names)
        if blocks["density"][0] != "gradient":
            raise ValidationError("radial models need a scalar density f",
                                  key="[density] f")
    else:  # general
        blocks["metric"] = _parse_metric(sections, dim, ("r",) + y_names)
        blocks["density"] = _parse_density(sections, dim, ("r",) + y_names, vec_names)

    extras = {}
    if "geodesic" in sections:
        start = _float_list(sections, "geodesic", "start", required=True)
        velocity = _float_list(sections, "geodesic", "velocity", required=True)
        if len(start) != dim or len(velocity) != dim:
            raise ValidationError(f"start and velocity need {dim} components",
                                  key="[geodesic] start")
        extras["geodesic"] = {"start": np.array(start), "velocity": np.array(velocity),
                              "T": _float_value(sections, "geodesic", "T", 10.0)}
    if "riccati" in sections:
        extras["riccati"] = {
            "a": _float_value(sections, "riccati", "a", 1.0),
            "y0": _float_value(sections, "riccati", "y0", 0.0),
            "y0p": _float_value(sections, "riccati", "y0p", 0.0),
            "t_max": _float_value(sections, "riccati", "t_max", 3.0),
        }
    if "compare" in sections:
        extras["compare"] = {
            "rho_min": _float_value(sections, "compare", "rho_min", 0.1),
            "rho_max": _float_value(sections, "compare", "rho_max", 10.0),
            "count": _int_value(sections, "compare", "count", 100),
        }
    if "bochner" in sections:
        extras["bochner"] = {"points": _int_value(sections, "bochner", "points", 20)}

    manifest = ManifoldManifest(name=name, kind=kind, dim=dim, blocks=blocks, grid=grid,
                                numeric=numeric, cd=cd, extras=extras, source_text=text)
    _trial_evaluate(manifest)
    return manifest


def _require_expr(sections, sec_name):
    sec = sections[sec_name]
    if "expr" not in sec:
        raise ValidationError("missing required key", key=f"[{sec_name}] expr")
    return sec["expr"]


def _parse_fiber(sections, fiber_dim):
    if "fiber" not in sections:
        raise ValidationError("missing required section", key="[fiber]")
    sec = sections["fiber"]
    if "type" not in sec:
        raise ValidationError("missing required key", key="[fiber] type")
    ftype = sec["type"][0]
    box = _float_value(sections, "fiber", "box", None)
    if ftype == "euclidean":
        if "einstein_constant" in sec or "periods" in sec:
            raise ValidationError("euclidean fibers take no curvature keys",
                                  key="[fiber] type")
        return EuclideanFiber(dim=fiber_dim, box=box if box is not None else 10.0)
    if ftype == "sphere":
        lam = _float_value(sections, "fiber", "einstein_constant", required=True)
        if lam <= 0:
            raise ValidationError("einstein_constant must be positive",
                                  key="[fiber] einstein_constant")
        return SphereFiber(dim=fiber_dim, einstein_constant=lam,
                           box=box if box is not None else 3.0)
    if ftype == "torus":
        periods = _float_list(sections, "fiber", "periods", required=True)
        if len(periods) != fiber_dim:
            raise ValidationError(f"need {fiber_dim} periods", key="[fiber] periods")
        return TorusFiber(dim=fiber_dim, periods=tuple(periods),
                          box=box if box is not None else 10.0)
    raise ValidationError(f"unknown fiber type {ftype!r}", key="[fiber] type")


def _parse_density(sections, dim, scalar_vars, vec_names):
    sec = sections.get("density")
    if sec is None:
        raise ValidationError("missing required section", key="[density]")
    if "f" in sec:
        if any(v in sec for v in vec_names):
            raise ValidationError("give either f or vector components, not both",
                                  key="[density] f")
        text, lineno = sec["f"]
        return ("gradient", compile_expression(text, scalar_vars, lineno))
    comps = []
    for v in vec_names:
        if v not in sec:
            raise ValidationError(f"vector densities need all of {vec_names}",
                                  key=f"[density] {v}")
        text, lineno = sec[v]
        comps.append(compile_expression(text, scalar_vars, lineno))
    return ("vector", tuple(comps))


def _parse_metric(sections, dim, variables):
    sec = sections.get("metric")
    if sec is None:
        raise ValidationError("missing required section", key="[metric]")
    entries = {}
    for i in range(dim):
        for j in range(i, dim):
            key = f"g{i + 1}{j + 1}"
            alt = f"g{j + 1}{i + 1}"
            if key in sec:
                text, lineno = sec[key]
            elif alt in sec:
                text, lineno = sec[alt]
            else:
                raise ValidationError("missing metric entry", key=f"[metric] {key}")
            entries[(i, j)] = compile_expression(text, variables, lineno)
    return entries


# ---------------------------------------------------------------------------
# manifest -> geometry objects
# ---------------------------------------------------------------------------

def grid_center(manifest: ManifoldManifest) -> np.ndarray:
    r_mid = 0.5 * (manifest.grid["r_min"] + manifest.grid["r_max"])
    if manifest.kind == "radial_model":
        cmp_block = manifest.extras.get("compare", {"rho_min": 0.1, "rho_max": 10.0})
        mid = 0.5 * (cmp_block["rho_min"] + cmp_block["rho_max"])
        out = np.zeros(manifest.dim)
        out[0] = mid
        return out
    if manifest.kind in ("split", "twisted"):
        fiber = manifest.blocks["fiber"]
        box = fiber.safe_box
        return np.concatenate([[r_mid], 0.5 * (box[:, 0] + box[:, 1])])
    y_lo = manifest.grid["y_min"] if manifest.grid["y_min"] is not None else -3.0
    y_hi = manifest.grid["y_max"] if manifest.grid["y_max"] is not None else 3.0
    out = np.full(manifest.dim, 0.5 * (y_lo + y_hi))
    out[0] = r_mid
    return out


def _density_field(manifest: ManifoldManifest):
    kind, payload = manifest.blocks["density"]
    if kind == "gradient":
        return expression_scalar_field(payload)
    comps = payload
    names = comps[0].variables

    def value(p):
        env = dict(zip(names, p))
        return np.array([eval_ast(c.ast, env) for c in comps])

    return VectorField(value=value)


def build_geometry(manifest: ManifoldManifest):
    """Realize the manifest as toolkit objects.

    Returns a dict with keys among: 'spec' (MetricSpec), 'density',
    'split' (SplitSpaceSpec), 'twisted' (TwistedProductSpec),
    'model' (RadialModel).  The [numeric] fd overrides are threaded into
    every realized MetricSpec.
    """
    import dataclasses

    from .chart_core import FDSteps

    fd = FDSteps(h1=manifest.numeric["fd1"], h2=manifest.numeric["fd2"],
                 h3=manifest.numeric["fd3"])
    out = {}
    if manifest.kind == "split":
        phi = manifest.blocks["phi"]
        dphi = phi.derivative("r")
        d2phi = dphi.derivative("r")
        f_L = None
        if "f_L" in manifest.blocks:
            f_L = expression_scalar_field(manifest.blocks["f_L"])
        split = SplitSpaceSpec(
            n=manifest.dim,
            phi=lambda r: phi(r), dphi=lambda r: dphi(r), d2phi=lambda r: d2phi(r),
            fiber=manifest.blocks["fiber"], f_L=f_L, name=manifest.name, fd=fd)
        out["split"] = split
        out["spec"] = split.metric_spec()
        out["density"] = split.density()
    elif manifest.kind == "twisted":
        psi_field = expression_scalar_field(manifest.blocks["psi"])
        twisted = TwistedProductSpec(n=manifest.dim, psi=psi_field,
                                     fiber=manifest.blocks["fiber"], name=manifest.name,
                                     fd=fd)
        out["twisted"] = twisted
        out["spec"] = twisted.metric_spec()
        if "density" in manifest.blocks:
            out["density"] = _density_field(manifest)
        else:
            out["density"] = psi_field  # the natural potential for this chart
    elif manifest.kind == "radial_model":
        f_expr = manifest.blocks["density"][1]
        df = f_expr.derivative("r")
        d2f = df.derivative("r")
        model = RadialModel(n=manifest.dim, f=lambda rho: f_expr(rho),
                            df=lambda rho: df(rho), d2f=lambda rho: d2f(rho),
                            name=manifest.name)
        out["model"] = model
        out["spec"] = dataclasses.replace(model.metric_spec(), fd=fd)
        out["density"] = model.density()
    else:  # general
        entries = manifest.blocks["metric"]
        dim = manifest.dim
        names = ("r",) + tuple(f"y{i + 1}" for i in range(dim - 1))
        partial_tables = {
            (i, j): [entries[(i, j)].derivative(v) for v in names]
            for (i, j) in entries
        }

        def g(p):
            env = dict(zip(names, p))
            out_m = np.empty((dim, dim))
            for (i, j), e in entries.items():
                out_m[i, j] = out_m[j, i] = eval_ast(e.ast, env)
            return out_m

        def partials(p):
            env = dict(zip(names, p))
            D = np.empty((dim, dim, dim))
            for (i, j), exprs in partial_tables.items():
                for k in range(dim):
                    v = eval_ast(exprs[k].ast, env)
                    D[k, i, j] = D[k, j, i] = v
            return D

        out["spec"] = MetricSpec(dim=dim, g=g, partials=partials, name=manifest.name,
                                 coord_names=names, fd=fd)
        out["density"] = _density_field(manifest)
    return out


def _trial_evaluate(manifest: ManifoldManifest) -> None:
    """Evaluate every expression block at the grid center; reject non-finite
    results and structurally bad metrics early."""
    center = grid_center(manifest)
    try:
        geo = build_geometry(manifest)
        if "spec" in geo:
            from .chart_core import metric_at

            g = metric_at(geo["spec"], center)
            vals = np.linalg.eigvalsh(g)
            if vals[0] <= 0:
                raise ValidationError(
                    f"metric is not positive definite at the grid center {center}",
                    key="[metric]")
        density = geo.get("density")
        if isinstance(density, ScalarField):
            v = density.value(center)
        elif isinstance(density, VectorField):
            v = float(np.linalg.norm(density.value(center)))
        else:
            v = 0.0
        if not np.isfinite(v):
            raise ValidationError(f"density evaluates non-finite at {center}",
                                  key="[density]")
    except (ValidationError, ParseError):
        raise
    except Exception as exc:
        raise ValidationError(f"trial evaluation at grid center failed: {exc}",
                              key="[manifold]") from exc

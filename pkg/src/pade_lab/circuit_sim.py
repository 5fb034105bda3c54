"""Gate-level block encodings of the assembled system, at desk scale.

Circuits are recorded as explicit gate lists over named registers and
realized as dense unitaries (qubit 0 is the most significant wire; ancilla
wires sit above the system wires, so the encoded matrix is the top-left block
of the realized unitary).  Everything is exact and checkable: each stage is a
unitary whose projection reproduces its target block up to the declared
normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CompositionError, LayoutError, ShapeError, SizeError
from .pade_core import pade_coefficients
from .system_builder import alternating_signs

QUBIT_BUDGET = 12


# ------------------------------------------------------------------ gates ---

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def ry_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def add_matrix(width: int) -> np.ndarray:
    """Cyclic increment |j> -> |j+1 mod 2^width>."""
    size = 2**width
    out = np.zeros((size, size), dtype=complex)
    for j in range(size):
        out[(j + 1) % size, j] = 1.0
    return out


@dataclass(frozen=True)
class Register:
    name: str
    width: int
    ancilla: bool


@dataclass(frozen=True)
class GateOp:
    """One primitive operation on absolute wire indices.

    kinds: H X Z NEGZ RY ADD UCRY OPAQUE.  ``controls`` holds (wire, value)
    pairs with value 0 for open and 1 for closed controls.  UCRY applies
    RY(angles[j]) to the target for each basis value j of the selector wires.
    """

    kind: str
    targets: tuple[int, ...]
    controls: tuple[tuple[int, int], ...] = ()
    angle: float | None = None
    angles: tuple[float, ...] | None = None
    selector: tuple[int, ...] = ()
    label: str | None = None


@dataclass
class CircuitSpec:
    """Ordered gate list over named registers, with any opaque unitaries attached."""

    registers: tuple[Register, ...]
    gates: list[GateOp] = field(default_factory=list)
    opaques: dict = field(default_factory=dict)

    @property
    def total_qubits(self) -> int:
        return sum(r.width for r in self.registers)

    @property
    def ancilla_qubits(self) -> int:
        return sum(r.width for r in self.registers if r.ancilla)

    def wires(self, name: str) -> list[int]:
        off = 0
        for reg in self.registers:
            if reg.name == name:
                return list(range(off, off + reg.width))
            off += reg.width
        raise KeyError(name)

    def validate(self):
        nq = self.total_qubits
        for g in self.gates:
            touched = list(g.targets) + [c for c, _ in g.controls] + list(g.selector)
            if any(q < 0 or q >= nq for q in touched):
                raise LayoutError(f"gate {g.kind} touches wire outside 0..{nq - 1}")
            if len(set(touched)) != len(touched):
                raise LayoutError(f"gate {g.kind} reuses a wire")
            if g.kind == "UCRY" and len(g.angles) != 2 ** len(g.selector):
                raise LayoutError("UCRY angle list length must match selector dimension")
            if g.kind == "OPAQUE" and g.label not in self.opaques:
                raise LayoutError(f"opaque gate {g.label!r} has no attached unitary")


def _apply(op: np.ndarray, gate: np.ndarray, targets, nq: int, controls=()):
    """Left-multiply a gate (on `targets`, conditioned on `controls`) into op."""
    cols = op.shape[1]
    tensor = op.reshape((2,) * nq + (cols,))
    index = [slice(None)] * (nq + 1)
    for wire, val in controls:
        index[wire] = val
    sub = tensor[tuple(index)]
    ctrl_wires = sorted(w for w, _ in controls)

    def local(w):
        return w - sum(1 for c in ctrl_wires if c < w)

    axes = [local(w) for w in targets]
    rest = [a for a in range(sub.ndim) if a not in axes]
    moved = np.transpose(sub, axes + rest)
    shape = moved.shape
    flat = gate @ moved.reshape(2 ** len(targets), -1)
    tensor[tuple(index)] = np.transpose(flat.reshape(shape), np.argsort(axes + rest))
    return tensor.reshape(2**nq, cols)


def realize_dense(spec: CircuitSpec) -> np.ndarray:
    """Multiply the gate list into a dense unitary."""
    spec.validate()
    nq = spec.total_qubits
    if nq > QUBIT_BUDGET:
        raise SizeError(f"{nq} qubits exceed the desk-scale budget {QUBIT_BUDGET}")
    op = np.eye(2**nq, dtype=complex)
    for g in spec.gates:
        if g.kind == "H":
            op = _apply(op, _H, g.targets, nq, g.controls)
        elif g.kind == "X":
            op = _apply(op, _X, g.targets, nq, g.controls)
        elif g.kind == "Z":
            op = _apply(op, _Z, g.targets, nq, g.controls)
        elif g.kind == "NEGZ":
            op = _apply(op, -_Z, g.targets, nq, g.controls)
        elif g.kind == "RY":
            op = _apply(op, ry_matrix(g.angle), g.targets, nq, g.controls)
        elif g.kind == "ADD":
            op = _apply(op, add_matrix(len(g.targets)), g.targets, nq, g.controls)
        elif g.kind == "UCRY":
            w = len(g.selector)
            for j, ang in enumerate(g.angles):
                bits = tuple((g.selector[i], (j >> (w - 1 - i)) & 1) for i in range(w))
                op = _apply(op, ry_matrix(ang), g.targets, nq, g.controls + bits)
        elif g.kind == "OPAQUE":
            op = _apply(op, spec.opaques[g.label], g.targets, nq, g.controls)
        else:
            raise LayoutError(f"unknown gate kind {g.kind!r}")
    return op


# --------------------------------------------------------- block encodings ---

@dataclass(frozen=True)
class BlockEncodingUnitary:
    """A dense unitary declared to hold target/alpha in its top-left block."""

    unitary: np.ndarray
    alpha: float
    ancillas: int
    target_dim: int
    circuit: CircuitSpec | None = None

    def __post_init__(self):
        dim = self.unitary.shape[0]
        if self.unitary.shape != (dim, dim) or dim & (dim - 1):
            raise ShapeError("unitary must be square with power-of-two dimension")
        if self.alpha <= 0:
            raise CompositionError("normalization must be positive")
        if self.target_dim * 2**self.ancillas != dim:
            raise ShapeError("ancilla count inconsistent with dimensions")

    @property
    def projection(self) -> np.ndarray:
        return self.unitary[: self.target_dim, : self.target_dim]

    @property
    def encoded(self) -> np.ndarray:
        return self.alpha * self.projection

    def unitarity_defect(self) -> float:
        u = self.unitary
        return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]), 2))


def verify_block_encoding(enc: BlockEncodingUnitary, target, tol: float = 1e-10) -> tuple[float, bool]:
    """Residual ||target - alpha * projection||_2 and whether it is within tol."""
    t = np.asarray(target, dtype=complex)
    if t.shape != (enc.target_dim, enc.target_dim):
        raise ShapeError(f"target shape {t.shape} vs encoded dim {enc.target_dim}")
    residual = float(np.linalg.norm(t - enc.encoded, 2))
    return residual, residual <= tol


def _qubits_for(value: int, what: str) -> int:
    q = int(value).bit_length() - 1
    if 2**q != value:
        raise LayoutError(f"{what}={value} must be a power of two")
    return q


def identity_encoding(n_qubits: int) -> BlockEncodingUnitary:
    dim = 2**n_qubits
    spec = CircuitSpec(registers=(Register("n", n_qubits, False),))
    return BlockEncodingUnitary(np.eye(dim, dtype=complex), 1.0, 0, dim, spec)


def zero_matrix_encoding(n_qubits: int) -> BlockEncodingUnitary:
    """(1,1)-encoding of the zero matrix: an X on the ancilla moves everything out."""
    spec = CircuitSpec(registers=(Register("a", 1, True), Register("n", n_qubits, False)),
                       gates=[GateOp("X", (0,))])
    return BlockEncodingUnitary(realize_dense(spec), 1.0, 1, 2**n_qubits, spec)


def hermitian_encoding(matrix_a, alpha: float | None = None) -> BlockEncodingUnitary:
    """(alpha,1)-encoding of a Hermitian matrix via the complement square root."""
    a = np.asarray(matrix_a, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n) or n & (n - 1):
        raise ShapeError("need a square matrix of power-of-two dimension")
    if np.abs(a - a.conj().T).max() > 1e-12 * max(np.abs(a).max(), 1e-300):
        raise CompositionError("matrix must be Hermitian")
    norm = float(np.linalg.norm(a, 2)) if n > 0 else 0.0
    if alpha is None:
        alpha = norm if norm > 0 else 1.0
    if alpha < norm - 1e-12:
        raise CompositionError("alpha must dominate the spectral norm")
    scaled = a / alpha
    w, v = np.linalg.eigh(scaled)
    comp = (v * np.sqrt(np.maximum(0.0, 1.0 - w**2))) @ v.conj().T
    u = np.block([[scaled, comp], [comp, -scaled]])
    nq = _qubits_for(n, "dim")
    spec = CircuitSpec(registers=(Register("a", 1, True), Register("n", nq, False)),
                       gates=[GateOp("OPAQUE", tuple(range(nq + 1)), label="U_A")],
                       opaques={"U_A": u})
    return BlockEncodingUnitary(u, float(alpha), 1, n, spec)


# ------------------------------------------------------------- combinators ---

def _embed_unitary(u: np.ndarray, wires: list[int], nq: int) -> np.ndarray:
    return _apply(np.eye(2**nq, dtype=complex), u, wires, nq)


def _prepare_column(weights: np.ndarray) -> np.ndarray:
    """Any real unitary whose first column is sqrt(weights/alpha) (Householder)."""
    c = np.sqrt(weights / weights.sum())
    e0 = np.zeros_like(c)
    e0[0] = 1.0
    v = e0 - c
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return np.eye(len(c))
    v /= nv
    return np.eye(len(c)) - 2.0 * np.outer(v, v)


def compose(kind: str, parts, weights=None, target_alpha: float | None = None) -> BlockEncodingUnitary:
    """Combine block encodings: lcu | product | tensor | adjust.

    The declared (alpha, ancillas) pair follows the combination rules exactly:
    lcu sums the weights, product and tensor multiply normalizations and add
    ancilla counts, adjust raises the normalization by one extra rotation
    ancilla.
    """
    if kind == "adjust":
        (enc,) = parts
        if target_alpha is None or target_alpha <= enc.alpha:
            raise CompositionError("adjust needs target_alpha > alpha")
        rot = ry_matrix(2.0 * math.acos(enc.alpha / target_alpha))
        u = np.kron(rot, enc.unitary)
        return BlockEncodingUnitary(u, float(target_alpha), enc.ancillas + 1, enc.target_dim)

    if kind == "product":
        enc_a, enc_b = parts
        if enc_a.target_dim != enc_b.target_dim:
            raise CompositionError("product parts must share the system dimension")
        sys_q = _qubits_for(enc_a.target_dim, "system dim")
        nq = enc_a.ancillas + enc_b.ancillas + sys_q
        if nq > QUBIT_BUDGET:
            raise SizeError("product exceeds the qubit budget")
        wa = list(range(enc_a.ancillas)) + list(range(enc_a.ancillas + enc_b.ancillas, nq))
        wb = list(range(enc_a.ancillas, nq))
        u = _embed_unitary(enc_a.unitary, wa, nq) @ _embed_unitary(enc_b.unitary, wb, nq)
        return BlockEncodingUnitary(u, enc_a.alpha * enc_b.alpha,
                                    enc_a.ancillas + enc_b.ancillas, enc_a.target_dim)

    if kind == "tensor":
        enc_a, enc_b = parts
        qa = _qubits_for(enc_a.target_dim, "left dim")
        qb = _qubits_for(enc_b.target_dim, "right dim")
        nq = enc_a.ancillas + enc_b.ancillas + qa + qb
        if nq > QUBIT_BUDGET:
            raise SizeError("tensor exceeds the qubit budget")
        wa = list(range(enc_a.ancillas)) + \
            list(range(enc_a.ancillas + enc_b.ancillas, enc_a.ancillas + enc_b.ancillas + qa))
        wb = list(range(enc_a.ancillas, enc_a.ancillas + enc_b.ancillas)) + \
            list(range(nq - qb, nq))
        u = _embed_unitary(enc_a.unitary, wa, nq) @ _embed_unitary(enc_b.unitary, wb, nq)
        return BlockEncodingUnitary(u, enc_a.alpha * enc_b.alpha,
                                    enc_a.ancillas + enc_b.ancillas,
                                    enc_a.target_dim * enc_b.target_dim)

    if kind == "lcu":
        parts = list(parts)
        if weights is None or len(weights) != len(parts):
            raise CompositionError("lcu needs one positive weight per part")
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0):
            raise CompositionError("lcu weights must be positive")
        dims = {p.target_dim for p in parts}
        if len(dims) != 1:
            raise CompositionError("lcu parts must share the system dimension")
        sys_dim = dims.pop()
        sys_q = _qubits_for(sys_dim, "system dim")
        anc = max(p.ancillas for p in parts)
        sel_q = max(1, math.ceil(math.log2(len(parts))))
        nq = sel_q + anc + sys_q
        if nq > QUBIT_BUDGET:
            raise SizeError("lcu exceeds the qubit budget")
        padded = np.zeros(2**sel_q)
        padded[: len(w)] = w
        prep = _prepare_column(padded)
        sel_wires = list(range(sel_q))
        u = _embed_unitary(prep, sel_wires, nq)
        for i, part in enumerate(parts):
            bits = tuple((sel_wires[b], (i >> (sel_q - 1 - b)) & 1) for b in range(sel_q))
            wires = list(range(sel_q + anc - part.ancillas, nq))
            u = _apply(u, part.unitary, wires, nq, bits)
        u = _apply(u, prep.T, sel_wires, nq)
        return BlockEncodingUnitary(u, float(w.sum()), sel_q + anc, sys_dim)

    raise CompositionError(f"unknown composition kind {kind!r}")


# ----------------------------------------------- figure-level constructions ---

def _beta_diagonal(k: int) -> np.ndarray:
    """Diagonal of the coefficient-ratio selector: 0, beta_k, ..., beta_1."""
    beta = pade_coefficients(k, k).beta_floats
    return np.concatenate([[0.0], beta[::-1]])


def shift_flag_target(size: int, sign: float = 1.0) -> np.ndarray:
    """Sub-diagonal shift with zero wraparound entry (the flagged increment)."""
    out = np.zeros((size, size))
    for j in range(size - 1):
        out[j + 1, j] = sign
    return out


def first_row_uniform(k1: int, signed: bool = False) -> np.ndarray:
    """Row block: uniform (or alternating-sign) first row over k+1 columns."""
    out = np.zeros((k1, k1))
    if signed:
        out[0] = alternating_signs(k1 - 1) / math.sqrt(k1)
    else:
        out[0] = 1.0 / math.sqrt(k1)
    return out


def primitive_targets(order: int, steps: int) -> dict[str, np.ndarray]:
    """Dense targets of the seven primitive encodings, for verification."""
    k, m = order, steps
    k1 = k + 1
    p = m * k1
    return {
        "m1": shift_flag_target(k1),
        "m2": first_row_uniform(k1),
        "m3": np.diag(_beta_diagonal(k)),
        "m4": shift_flag_target(p, sign=-1.0),
        "m5": np.diag([1.0 / math.sqrt(k1)] + [1.0] * (p - 1)),
        "m6": first_row_uniform(k1, signed=True),
        "m7": np.diag([1.0] * m + [0.0] * m),
    }


def _spec(regs, gates, opaques=None) -> CircuitSpec:
    return CircuitSpec(registers=tuple(regs), gates=list(gates), opaques=opaques or {})


def _enc_from_spec(spec: CircuitSpec, alpha: float, ancillas: int, target_dim: int):
    return BlockEncodingUnitary(realize_dense(spec), alpha, ancillas, target_dim, spec)


def primitive_encodings(order: int, steps: int, a_encoding: BlockEncodingUnitary | None = None,
                        step_h: float = 1.0) -> dict[str, BlockEncodingUnitary]:
    """Standalone (1,1)-encodings of the seven primitive blocks.

    Register sizes must be powers of two.  ``a_encoding``/``step_h`` only
    gate the preconditions here; the coupling into the matrix itself happens
    in :func:`build_l_encoding`.
    """
    k, m = int(order), int(steps)
    kq = _qubits_for(k + 1, "k+1")
    mq = _qubits_for(m, "m")
    if step_h <= 0:
        raise LayoutError("step size must be positive")
    if a_encoding is not None:
        # a valid encoding always dominates its block: ||projection|| <= 1
        if np.linalg.norm(a_encoding.projection, 2) > 1.0 + 1e-12:
            raise CompositionError("a_encoding normalization below its encoded block")
    out: dict[str, BlockEncodingUnitary] = {}

    flag, reg0 = 0, 1
    kw = list(range(reg0, reg0 + kq))
    out["m1"] = _enc_from_spec(
        _spec([Register("flag", 1, True), Register("k", kq, False)],
              [GateOp("X", (flag,), tuple((q, 1) for q in kw)),
               GateOp("ADD", tuple(kw))]),
        1.0, 1, k + 1)
    out["m2"] = _enc_from_spec(
        _spec([Register("flag", 1, True), Register("k", kq, False)],
              [GateOp("X", (flag,)),
               *[GateOp("H", (q,)) for q in kw],
               GateOp("X", (flag,), tuple((q, 0) for q in kw))]),
        1.0, 1, k + 1)
    diag = _beta_diagonal(k)
    out["m3"] = _enc_from_spec(
        _spec([Register("flag", 1, True), Register("k", kq, False)],
              [GateOp("UCRY", (flag,), angles=tuple(2.0 * math.acos(v) for v in diag),
                      selector=tuple(kw))]),
        1.0, 1, k + 1)
    pw = list(range(reg0, reg0 + mq + kq))
    out["m4"] = _enc_from_spec(
        _spec([Register("flag", 1, True), Register("p", mq + kq, False)],
              [GateOp("X", (flag,), tuple((q, 1) for q in pw)),
               GateOp("NEGZ", (flag,)),
               GateOp("ADD", tuple(pw))]),
        1.0, 1, m * (k + 1))
    theta0 = 2.0 * math.acos(1.0 / math.sqrt(k + 1))
    out["m5"] = _enc_from_spec(
        _spec([Register("flag", 1, True), Register("p", mq + kq, False)],
              [GateOp("RY", (flag,), tuple((q, 0) for q in pw), angle=theta0)]),
        1.0, 1, m * (k + 1))
    out["m6"] = _enc_from_spec(
        _spec([Register("flag", 1, True), Register("k", kq, False)],
              [GateOp("X", (flag,)),
               *[GateOp("H", (q,)) for q in kw],
               GateOp("X", (kw[-1],)),
               GateOp("X", (flag,), tuple((q, 0) for q in kw))]),
        1.0, 1, k + 1)
    sw = list(range(reg0, reg0 + 1 + mq))
    out["m7"] = _enc_from_spec(
        _spec([Register("flag", 1, True), Register("s", 1 + mq, False)],
              [GateOp("X", (flag,), ((sw[0], 1),))]),
        1.0, 1, 2 * m)
    return out


#: Rotation angles fixed by the construction: LCU over three unit weights,
#: the 2->3 normalization adjustment, and the top-level 3+1 combination.
ZETA = 2.0 * math.acos(math.sqrt(6.0) / 3.0)
THETA_1 = 2.0 * math.acos(2.0 / 3.0)
THETA_2 = math.pi / 3.0


def _normalized_a(a_encoding: BlockEncodingUnitary, step_h: float):
    """(unitary, ancilla width, scale) with the A normalization matched to h.

    Below alpha*h = 1 a single rotation wire raises the normalization to 1/h;
    above it the surrounding stages must carry the residual factor `scale`.
    """
    alpha_h = a_encoding.alpha * step_h
    ua = a_encoding.unitary
    width = a_encoding.ancillas
    if alpha_h < 1.0 - 1e-12:
        ua = np.kron(ry_matrix(2.0 * math.acos(alpha_h)), ua)
        return ua, width + 1, 1.0
    if alpha_h > 1.0 + 1e-12:
        return ua, width, alpha_h
    return ua, width, 1.0


def _emit_one_step_branch(g, w1, w2, flag, dw, kw, nw, k, base, scale_rot):
    """Three-term combination for one step block: shift, summation row, ratios*A."""
    g(GateOp("Z", (w1,), base))
    g(GateOp("RY", (w1,), base, angle=ZETA))
    g(GateOp("H", (w2,), base))
    scale_rot(base + ((w1, 0),))  # the two A-free terms carry 1/(alpha h)
    c_m1 = base + ((w1, 0), (w2, 0))
    g(GateOp("X", (flag,), c_m1 + tuple((q, 1) for q in kw)))
    g(GateOp("ADD", tuple(kw), c_m1))
    c_m2 = base + ((w1, 0), (w2, 1))
    g(GateOp("X", (flag,), c_m2))
    for q in kw:
        g(GateOp("H", (q,), c_m2))
    g(GateOp("X", (flag,), c_m2 + tuple((q, 0) for q in kw)))
    c_m3 = base + ((w1, 1),)
    diag = _beta_diagonal(k)
    g(GateOp("UCRY", (flag,), c_m3, angles=tuple(2.0 * math.acos(v) for v in diag),
             selector=tuple(kw)))
    g(GateOp("OPAQUE", tuple(dw + nw), c_m3, label="U_A"))
    g(GateOp("Z", (w1,), base))
    g(GateOp("RY", (w1,), base, angle=ZETA))
    g(GateOp("H", (w2,), base))


def _emit_padding_branch(g, w1, w2, flag, pw, k, base, scale_rot):
    """Two-term combination for the padding chain, raised from 2 to 3."""
    scale_rot(base)
    g(GateOp("RY", (w1,), base, angle=THETA_1))
    g(GateOp("H", (w2,), base))
    c_m5 = base + ((w2, 0),)
    theta0 = 2.0 * math.acos(1.0 / math.sqrt(k + 1))
    g(GateOp("RY", (flag,), c_m5 + tuple((q, 0) for q in pw), angle=theta0))
    c_m4 = base + ((w2, 1),)
    g(GateOp("X", (flag,), c_m4 + tuple((q, 1) for q in pw)))
    g(GateOp("NEGZ", (flag,), c_m4))
    g(GateOp("ADD", tuple(pw), c_m4))
    g(GateOp("H", (w2,), base))


def _emit_coupling_branch(g, w1, flag, top, mw, kw, base, scale_rot):
    """Step coupling: select the first half and the signed row, then increment.

    The selection must run before the cyclic increment; the reversed order
    would park a spurious coupling block in the wrap-around corner.
    """
    scale_rot(base)
    g(GateOp("X", (w1,), base + ((top, 1),)))
    g(GateOp("X", (flag,), base))
    for q in kw[:-1]:
        g(GateOp("H", (q,), base))
    g(GateOp("H", (kw[-1],), base))
    g(GateOp("X", (kw[-1],), base))
    g(GateOp("X", (flag,), base + tuple((q, 0) for q in kw)))
    g(GateOp("ADD", tuple([top] + mw), base))


def _stage_spec(a_width: int, mq: int, kq: int, nq_n: int, scale: float,
                with_top: bool, with_w2: bool = True, opaques=None):
    regs = []
    if scale > 1.0:
        regs.append(Register("scale", 1, True))
    regs.append(Register("w1", 1, True))
    if with_w2:
        regs.append(Register("w2", 1, True))
    regs.append(Register("flag", 1, True))
    if a_width:
        regs.append(Register("d", a_width, True))
    if with_top:
        regs.append(Register("top", 1, False))
    if mq:
        regs.append(Register("m", mq, False))
    regs.append(Register("k", kq, False))
    if nq_n:
        regs.append(Register("n", nq_n, False))
    return CircuitSpec(registers=tuple(regs), opaques=opaques or {})


def _scale_rot_fn(spec: CircuitSpec, scale: float):
    if scale <= 1.0:
        return lambda controls: None
    qs = spec.wires("scale")[0]
    phi = 2.0 * math.acos(1.0 / scale)

    def rot(controls):
        spec.gates.append(GateOp("RY", (qs,), tuple(controls), angle=phi))

    return rot


def build_w_encoding(a_encoding: BlockEncodingUnitary, step_h: float,
                     order: int) -> BlockEncodingUnitary:
    """(3*max(alpha h,1), d+3 or d+4)-encoding of the one-step block W_k(A h)."""
    k = int(order)
    kq = _qubits_for(k + 1, "k+1")
    nq_n = _qubits_for(a_encoding.target_dim, "n")
    ua, a_width, scale = _normalized_a(a_encoding, step_h)
    spec = _stage_spec(a_width, 0, kq, nq_n, scale, with_top=False, opaques={"U_A": ua})
    w1, w2, flag = spec.wires("w1")[0], spec.wires("w2")[0], spec.wires("flag")[0]
    dw = spec.wires("d") if a_width else []
    kw, nw = spec.wires("k"), spec.wires("n") if nq_n else []
    _emit_one_step_branch(spec.gates.append, w1, w2, flag, dw, kw, nw, k, (),
                          _scale_rot_fn(spec, scale))
    return BlockEncodingUnitary(realize_dense(spec), 3.0 * scale, spec.ancilla_qubits,
                                (k + 1) * a_encoding.target_dim, spec)


def build_b_encoding(order: int, steps: int, scale: float = 1.0) -> BlockEncodingUnitary:
    """(3*scale, 3 or 4)-encoding of the p x p padding bidiagonal chain."""
    k, m = int(order), int(steps)
    kq = _qubits_for(k + 1, "k+1")
    mq = _qubits_for(m, "m")
    spec = _stage_spec(0, mq, kq, 0, scale, with_top=False)
    w1, w2, flag = spec.wires("w1")[0], spec.wires("w2")[0], spec.wires("flag")[0]
    pw = (spec.wires("m") if mq else []) + spec.wires("k")
    _emit_padding_branch(spec.gates.append, w1, w2, flag, pw, k, (),
                         _scale_rot_fn(spec, scale))
    return BlockEncodingUnitary(realize_dense(spec), 3.0 * scale, spec.ancilla_qubits,
                                m * (k + 1), spec)


def build_coupling_encoding(order: int, steps: int, scale: float = 1.0) -> BlockEncodingUnitary:
    """(scale, 2 or 3)-encoding of the inter-step coupling term (n-factor dropped)."""
    k, m = int(order), int(steps)
    kq = _qubits_for(k + 1, "k+1")
    mq = _qubits_for(m, "m")
    spec = _stage_spec(0, mq, kq, 0, scale, with_top=True, with_w2=False)
    w1, flag = spec.wires("w1")[0], spec.wires("flag")[0]
    top = spec.wires("top")[0]
    mw = spec.wires("m") if mq else []
    _emit_coupling_branch(spec.gates.append, w1, flag, top, mw, spec.wires("k"), (),
                          _scale_rot_fn(spec, scale))
    return BlockEncodingUnitary(realize_dense(spec), scale, spec.ancilla_qubits,
                                2 * m * (k + 1), spec)


def coupling_target(order: int, steps: int) -> np.ndarray:
    """Dense coupling term over the 2m(k+1) index space (without the n factor)."""
    k, m = int(order), int(steps)
    targets = primitive_targets(k, m)
    # cyclic one-slot down-shift composed with the half-selected signed row
    return np.roll(np.kron(targets["m7"], targets["m6"]), k + 1, axis=0)


def build_l_encoding(a_encoding: BlockEncodingUnitary, step_h: float,
                     steps: int, order: int) -> BlockEncodingUnitary:
    """Gate-level encoding of the full assembled operator.

    Returns a (4*max(alpha*h, 1), d+5)-encoding (d+4 when alpha*h = 1): the
    one-step blocks enter through a three-term combination, the padding chain
    through a two-term one raised to match, and the step coupling through a
    select-then-increment product stage.
    """
    m, k = int(steps), int(order)
    kq = _qubits_for(k + 1, "k+1")
    mq = _qubits_for(m, "m")
    sys_dim = a_encoding.target_dim
    nq_n = _qubits_for(sys_dim, "n")
    ua, a_width, scale = _normalized_a(a_encoding, step_h)

    regs = [Register("lcu", 1, True)]
    if scale > 1.0:
        regs.append(Register("scale", 1, True))
    regs += [Register("w1", 1, True), Register("w2", 1, True), Register("flag", 1, True)]
    if a_width:
        regs.append(Register("d", a_width, True))
    regs += [Register("top", 1, False), Register("m", mq, False),
             Register("k", kq, False), Register("n", nq_n, False)]
    spec = CircuitSpec(registers=tuple(regs), opaques={"U_A": ua})
    if spec.total_qubits > QUBIT_BUDGET:
        raise SizeError(f"{spec.total_qubits} qubits exceed the desk budget {QUBIT_BUDGET}")

    lcu = spec.wires("lcu")[0]
    w1, w2, flag = spec.wires("w1")[0], spec.wires("w2")[0], spec.wires("flag")[0]
    dw = spec.wires("d") if a_width else []
    top = spec.wires("top")[0]
    mw, kw = spec.wires("m"), spec.wires("k")
    nw = spec.wires("n") if nq_n else []
    g = spec.gates.append
    scale_rot = _scale_rot_fn(spec, scale)

    g(GateOp("Z", (lcu,)))
    g(GateOp("RY", (lcu,), angle=THETA_2))
    _emit_one_step_branch(g, w1, w2, flag, dw, kw, nw, k, ((lcu, 0), (top, 0)), scale_rot)
    _emit_padding_branch(g, w1, w2, flag, mw + kw, k, ((lcu, 0), (top, 1)), scale_rot)
    _emit_coupling_branch(g, w1, flag, top, mw, kw, ((lcu, 1),), scale_rot)
    g(GateOp("Z", (lcu,)))
    g(GateOp("RY", (lcu,), angle=THETA_2))

    ancillas = spec.ancilla_qubits
    return BlockEncodingUnitary(realize_dense(spec), 4.0 * scale, ancillas,
                                2 * m * (k + 1) * sys_dim, spec)

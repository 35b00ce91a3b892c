"""End-to-end key distribution over a simulated public channel.

Alice and Bob each hold their own settings and outcomes and only learn about
the other side through messages on :class:`PublicChannel`. A run proceeds as

1. independent biased choices ``I, J`` and settings ``X, Y``;
2. measurement of the shared source;
3. announcement of ``I, J`` and of the estimation-pair settings and outcomes,
   giving ``B_est``;
4. disclosure of a small raw-key sample to estimate the flip rate ``w``;
5. one-way error correction of the remaining raw key;
6. Toeplitz hashing down to the extractable length.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .boxcore import ConditionalBox, NBox, bc_variable, in_estimation_set
from .hashing import TwoUniversalHash, sample_hash
from .reconciliation import EcConfig, build_code
from .security import LENGTH_RULES, output_length


class ProtocolAbort(RuntimeError):
    """The run ended without a key; ``transcript`` holds everything recorded so far."""

    def __init__(self, message: str, transcript: "Transcript | None" = None):
        super().__init__(message)
        self.transcript = transcript


class EmptyEstimationSet(ProtocolAbort):
    pass


class DecodeFailure(ProtocolAbort):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    """Run parameters.

    Attributes
    ----------
    N : int
        Number of pairs.
    M : int
        Alice's setting count; Bob has one more.
    delta : float
        Probability that a party picks an estimation setting.
    seed : int
    ec : EcConfig
    margin : float or None
        Bits deducted from the key length beyond the syndrome; None means ``sqrt(N_e)``.
    length_rule : {"finite", "asymptotic"}
    """

    N: int
    M: int
    delta: float
    seed: int = 0
    ec: EcConfig = field(default_factory=EcConfig)
    margin: float | None = None
    length_rule: str = "finite"

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.length_rule not in LENGTH_RULES:
            raise ValueError(f"length_rule must be one of {LENGTH_RULES}")

    @classmethod
    def auto_delta(cls, N: int, M: int, **kw) -> "ProtocolParams":
        return cls(N=N, M=M, delta=N**-0.25, **kw)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["ec"] = asdict(self.ec)
        return d


@dataclass
class Message:
    sender: str
    kind: str
    payload: Any
    revealed: np.ndarray | None = None  # indices whose outcomes the message discloses


class PublicChannel:
    """Authenticated broadcast channel; everything sent is recorded in order."""

    def __init__(self) -> None:
        self.log: list[Message] = []

    def send(self, sender: str, kind: str, payload: Any, revealed=None) -> Any:
        rev = None if revealed is None else np.asarray(revealed, dtype=np.int64)
        self.log.append(Message(sender, kind, payload, rev))
        return payload

    def revealed_indices(self) -> np.ndarray:
        parts = [m.revealed for m in self.log if m.revealed is not None]
        return np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)

    def summary(self) -> list[dict[str, Any]]:
        out = []
        for m in self.log:
            entry = {"sender": m.sender, "kind": m.kind, "payload": _jsonable(m.payload)}
            if m.revealed is not None:
                entry["revealed"] = int(m.revealed.size)
            out.append(entry)
        return out


@dataclass
class Transcript:
    """Full record of one run. Bit strings are uint8 arrays."""

    params: dict[str, Any]
    I: np.ndarray
    J: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    est_set: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    raw_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sample_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    B_est: float = math.nan
    w_hat: float = math.nan
    N_r: int = 0
    N_e: int = 0
    N_c: int = 0
    N_s: int = 0
    N_s_asymptotic: int = 0
    C: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    G: TwoUniversalHash | None = None
    K_A: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    K_B: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    B_corrected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    failed_blocks: list[int] = field(default_factory=list)
    public_log: list[dict[str, Any]] = field(default_factory=list)
    revealed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    status: str = "running"

    @property
    def N(self) -> int:
        return int(self.I.size)

    @property
    def keys_agree(self) -> bool:
        return self.K_A.size == self.K_B.size and bool(np.array_equal(self.K_A, self.K_B))

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": self.params,
            "status": self.status,
            "N": self.N,
            "I": _bitstr(self.I),
            "J": _bitstr(self.J),
            "X": self.X.astype(int).tolist(),
            "Y": self.Y.astype(int).tolist(),
            "A": _bitstr(self.A),
            "B": _bitstr(self.B),
            "estSet": self.est_set.astype(int).tolist(),
            "rawIdx": self.raw_idx.astype(int).tolist(),
            "sampleIdx": self.sample_idx.astype(int).tolist(),
            "B_est": _float_or_none(self.B_est),
            "w_hat": _float_or_none(self.w_hat),
            "N_r": self.N_r,
            "N_e": self.N_e,
            "N_c": self.N_c,
            "N_s": self.N_s,
            "N_s_asymptotic": self.N_s_asymptotic,
            "C": _bitstr(self.C),
            "G": None
            if self.G is None
            else {"inLen": self.G.in_len, "outLen": self.G.out_len, "seedHex": self.G.to_hex()},
            "K_A": _bitstr(self.K_A),
            "K_B": _bitstr(self.K_B),
            "B_corrected": _bitstr(self.B_corrected),
            "failedBlocks": list(self.failed_blocks),
            "publicLog": self.public_log,
            "revealed": self.revealed.astype(int).tolist(),
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Transcript":
        g = d.get("G")
        return cls(
            params=d["params"],
            I=_parse_bits(d["I"]),
            J=_parse_bits(d["J"]),
            X=np.asarray(d["X"], dtype=np.int64),
            Y=np.asarray(d["Y"], dtype=np.int64),
            A=_parse_bits(d["A"]),
            B=_parse_bits(d["B"]),
            est_set=np.asarray(d["estSet"], dtype=np.int64),
            raw_idx=np.asarray(d["rawIdx"], dtype=np.int64),
            sample_idx=np.asarray(d["sampleIdx"], dtype=np.int64),
            B_est=math.nan if d["B_est"] is None else d["B_est"],
            w_hat=math.nan if d["w_hat"] is None else d["w_hat"],
            N_r=d["N_r"],
            N_e=d["N_e"],
            N_c=d["N_c"],
            N_s=d["N_s"],
            N_s_asymptotic=d["N_s_asymptotic"],
            C=_parse_bits(d["C"]),
            G=None if g is None else TwoUniversalHash.from_hex(g["inLen"], g["outLen"], g["seedHex"]),
            K_A=_parse_bits(d["K_A"]),
            K_B=_parse_bits(d["K_B"]),
            B_corrected=_parse_bits(d["B_corrected"]),
            failed_blocks=list(d["failedBlocks"]),
            public_log=d["publicLog"],
            revealed=np.asarray(d["revealed"], dtype=np.int64),
            status=d["status"],
        )

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def sample_settings(params: ProtocolParams, rng: np.random.Generator):
    """Biased choices and settings: raw-key settings are ``X = 0`` and ``Y = M``."""
    N, M, d = params.N, params.M, params.delta
    I = (rng.random(N) < d).astype(np.uint8)
    J = (rng.random(N) < d).astype(np.uint8)
    X = np.where(I == 1, rng.integers(0, M, N), 0).astype(np.int64)
    Y = np.where(J == 1, rng.integers(0, M, N), M).astype(np.int64)
    return I, J, X, Y


class NBoxSource:
    """Source that correlates consecutive groups of ``box.N`` pairs.

    A trailing group with fewer pairs is drawn from the marginal on its first
    pairs, which is well defined because the box is no-signaling.
    """

    def __init__(self, box: NBox):
        self.box = box

    @property
    def group(self) -> int:
        return self.box.N

    @property
    def M(self) -> int:
        return self.box.M

    def marginal(self, k: int) -> np.ndarray:
        """Entries of the first ``k`` pairs, summing the rest out at setting 0."""
        n = self.box.N
        P = self.box.entries
        # axes: a_1..a_n, b_1..b_n, x_1..x_n, y_1..y_n
        drop_out = tuple(range(k, n)) + tuple(range(n + k, 2 * n))
        P = P.sum(axis=drop_out)
        # remaining axes: a_1..a_k, b_1..b_k, x_1..x_n, y_1..y_n
        idx = [slice(None)] * (2 * k) + [slice(None)] * k + [0] * (n - k) + [slice(None)] * k + [0] * (n - k)
        return P[tuple(idx)]


def _sample_conditional(P: np.ndarray, X, Y, rng: np.random.Generator):
    """Draw ``(a, b)`` for each pair from the ``(2, 2, ...)`` table at (X, Y)."""
    cells = P[:, :, X, Y].reshape(4, -1)
    cdf = np.cumsum(cells, axis=0)
    u = rng.random(cells.shape[1])
    k = np.minimum((u[None, :] >= cdf).sum(axis=0), 3)
    return (k >> 1).astype(np.uint8), (k & 1).astype(np.uint8)


def _sample_group(P: np.ndarray, k: int, Xg: np.ndarray, Yg: np.ndarray, rng: np.random.Generator):
    """Joint draws for ``len(Xg)`` groups of ``k`` pairs from entries ``P`` over ``k`` pairs."""
    n_groups = Xg.shape[0]
    idx = tuple([slice(None)] * (2 * k)) + tuple(Xg.T) + tuple(Yg.T)
    cells = P[idx].reshape(4**k, n_groups)
    cdf = np.cumsum(cells, axis=0)
    u = rng.random(n_groups)
    flat = np.minimum((u[None, :] >= cdf).sum(axis=0), 4**k - 1)
    outs = np.array(np.unravel_index(flat, (2,) * (2 * k))).T.astype(np.uint8)
    return outs[:, :k].ravel(), outs[:, k:].ravel()


def measure(source, X, Y, rng: np.random.Generator):
    """Outcomes of every pair.

    Parameters
    ----------
    source : ConditionalBox or NBoxSource
        A ConditionalBox gives i.i.d. pairs.
    """
    X = np.asarray(X, dtype=np.int64)
    Y = np.asarray(Y, dtype=np.int64)
    if isinstance(source, NBox):
        source = NBoxSource(source)
    if isinstance(source, ConditionalBox):
        if X.max(initial=0) >= source.M or Y.max(initial=0) >= source.entries.shape[3]:
            raise ValueError("settings exceed the source's setting range")
        return _sample_conditional(source.entries, X, Y, rng)
    if isinstance(source, NBoxSource):
        n_set_b = source.box.entries.shape[-1]
        if X.max(initial=0) >= source.M or Y.max(initial=0) >= n_set_b:
            raise ValueError("settings exceed the source's setting range")
        g = source.group
        N = X.size
        full = N // g
        A = np.zeros(N, dtype=np.uint8)
        B = np.zeros(N, dtype=np.uint8)
        if full:
            a, b = _sample_group(
                source.box.entries, g, X[: full * g].reshape(full, g), Y[: full * g].reshape(full, g), rng
            )
            A[: full * g], B[: full * g] = a, b
        rest = N - full * g
        if rest:
            P = source.marginal(rest)
            a, b = _sample_group(P, rest, X[full * g :].reshape(1, rest), Y[full * g :].reshape(1, rest), rng)
            A[full * g :], B[full * g :] = a, b
        return A, B
    raise TypeError(f"unsupported source {type(source).__name__}")


def estimate_bc(A, B, X, Y, est_set, M: int) -> float:
    """Mean of the BC variable over the estimation pairs."""
    est_set = np.asarray(est_set, dtype=np.int64)
    if est_set.size == 0:
        raise EmptyEstimationSet("no pair satisfies the estimation condition")
    vals = bc_variable(
        np.asarray(A)[est_set], np.asarray(B)[est_set], np.asarray(X)[est_set], np.asarray(Y)[est_set], M
    )
    return float(np.mean(vals))


class _Party:
    def __init__(self, name: str, choice, setting, outcome, channel: PublicChannel):
        self.name = name
        self.choice = choice
        self.setting = setting
        self.outcome = outcome
        self.channel = channel

    def announce_choices(self):
        return self.channel.send(self.name, "choices", self.choice.copy())

    def estimation_pairs(self, other_choice) -> np.ndarray:
        return np.flatnonzero((self.choice == 1) & (other_choice == 1))

    def raw_pairs(self, other_choice) -> np.ndarray:
        return np.flatnonzero((self.choice == 0) & (other_choice == 0))

    def announce_estimation(self, idx: np.ndarray):
        payload = {"settings": self.setting[idx].copy(), "outcomes": self.outcome[idx].copy()}
        return self.channel.send(self.name, "estimation", payload, revealed=idx)


class Alice(_Party):
    def choose_sample(self, raw: np.ndarray, fraction: float, rng: np.random.Generator):
        n = int(round(fraction * raw.size))
        picked = np.sort(rng.choice(raw, size=n, replace=False)) if n else np.zeros(0, dtype=np.int64)
        payload = {"indices": picked, "bits": self.outcome[picked].copy()}
        self.channel.send(self.name, "sample", payload, revealed=picked)
        return picked

    def syndrome(self, code, key_idx: np.ndarray) -> np.ndarray:
        return self.channel.send(self.name, "syndrome", code.encode(self.outcome[key_idx]))

    def choose_hash(self, n_in: int, n_out: int, rng: np.random.Generator) -> TwoUniversalHash:
        h = sample_hash(n_in, n_out, rng)
        self.channel.send(self.name, "hash", {"inLen": n_in, "outLen": n_out, "seedHex": h.to_hex()})
        return h


class Bob(_Party):
    def flip_rate(self, sample_msg: dict) -> float:
        idx = sample_msg["indices"]
        w = float(np.mean(sample_msg["bits"] != self.outcome[idx])) if idx.size else 0.0
        return self.channel.send(self.name, "flip-rate", w)

    def correct(self, code, key_idx: np.ndarray, C: np.ndarray):
        corrected, failed = code.decode(self.outcome[key_idx], C)
        self.channel.send(self.name, "decode-status", {"failed": list(failed)})
        return corrected, failed


def run_protocol(params: ProtocolParams, source) -> Transcript:
    """One complete run; raises :class:`ProtocolAbort` subclasses on abort."""
    streams = np.random.SeedSequence(params.seed).spawn(4)
    rng_settings, rng_source, rng_sample, rng_hash = (np.random.default_rng(s) for s in streams)
    M = params.M

    I, J, X, Y = sample_settings(params, rng_settings)
    A, B = measure(source, X, Y, rng_source)
    t = Transcript(params=params.to_dict(), I=I, J=J, X=X, Y=Y, A=A, B=B)

    channel = PublicChannel()
    alice = Alice("alice", I, X, A, channel)
    bob = Bob("bob", J, Y, B, channel)

    J_pub = bob.announce_choices()
    I_pub = alice.announce_choices()

    est_pairs = alice.estimation_pairs(J_pub)
    a_msg = alice.announce_estimation(est_pairs)
    b_msg = bob.announce_estimation(est_pairs)
    keep = in_estimation_set(a_msg["settings"], b_msg["settings"], M)
    t.est_set = est_pairs[keep]
    t.N_e = int(t.est_set.size)
    if t.N_e == 0:
        t.status = "aborted: empty estimation set"
        _finish(t, channel)
        raise EmptyEstimationSet("no pair satisfies the estimation condition", t)
    t.B_est = estimate_bc(A, B, X, Y, t.est_set, M)
    channel.send("alice", "bc-estimate", t.B_est)

    raw = alice.raw_pairs(J_pub)
    assert np.array_equal(raw, bob.raw_pairs(I_pub))
    sample_idx = alice.choose_sample(raw, params.ec.sample_fraction, rng_sample)
    w_hat = bob.flip_rate(channel.log[-1].payload)
    t.sample_idx = sample_idx
    t.w_hat = w_hat
    key_idx = np.setdiff1d(raw, sample_idx, assume_unique=True)
    t.raw_idx = key_idx
    t.N_r = int(key_idx.size)

    code = build_code(t.N_r, w_hat, params.ec)
    C = alice.syndrome(code, key_idx)
    t.C = C
    t.N_c = int(C.size + sample_idx.size)
    corrected, failed = bob.correct(code, key_idx, C)
    t.B_corrected = corrected
    t.failed_blocks = list(failed)
    if failed:
        t.status = f"aborted: {len(failed)} undecodable block(s)"
        _finish(t, channel)
        raise DecodeFailure(f"{len(failed)} block(s) failed to decode", t)

    t.N_s = output_length(t.N_r, t.N_c, t.B_est, t.N_e, rule=params.length_rule, margin=params.margin)
    t.N_s_asymptotic = output_length(t.N_r, t.N_c, t.B_est, t.N_e, rule="asymptotic") if t.B_est > 0 else 0
    G = alice.choose_hash(t.N_r, t.N_s, rng_hash)
    t.G = G
    t.K_A = G(A[key_idx])
    t.K_B = G(corrected)
    t.status = "ok"
    _finish(t, channel)
    return t


def _finish(t: Transcript, channel: PublicChannel) -> None:
    t.public_log = channel.summary()
    t.revealed = channel.revealed_indices()


def _bitstr(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits).ravel())


def _parse_bits(s: str) -> np.ndarray:
    if s and set(s) - {"0", "1"}:
        raise ValueError("bit strings may only contain 0 and 1")
    return np.frombuffer(s.encode(), dtype=np.uint8) - ord("0") if s else np.zeros(0, dtype=np.uint8)


def _float_or_none(v: float):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        if v.dtype == np.uint8:
            return _bitstr(v)
        return v.astype(int).tolist()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def bits_from_string(s: str) -> np.ndarray:
    return _parse_bits(s).astype(np.uint8)


def agreement_rate(transcripts: Sequence[Transcript]) -> float:
    return float(np.mean([t.keys_agree for t in transcripts]))


def sample_bc_estimates(box: ConditionalBox, N_e: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """``trials`` independent estimates ``B_est`` from ``N_e`` i.i.d. estimation pairs.

    The counts over the ``2M x 4`` (setting, outcome) cells are multinomial,
    and ``B_est`` depends on the pairs only through those counts, so this
    has the same law as measuring ``N_e`` pairs one by one.
    """
    M = box.M
    cells = []
    values = []
    for x in range(M):
        for y in (x, (x + 1) % M):
            for a in (0, 1):
                for b in (0, 1):
                    cells.append(box.entries[a, b, x, y] / (2 * M))
                    values.append(float(bc_variable(a, b, x, y, M)))
    p = np.asarray(cells)
    p /= p.sum()
    counts = rng.multinomial(N_e, p, size=trials)
    return counts @ np.asarray(values) / N_e

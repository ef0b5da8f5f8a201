"""Save and load trained classifier bundles as plain text.

Line-oriented, human-diffable, and value preserving: every float is written
with .17g precision, which is enough to reproduce an IEEE double exactly, so
load(save(bundle)) predicts identically and save(load(path)) reproduces the
file byte for byte. A sha256 checksum over the body guards against silent
truncation or editing.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import CorruptModel, FormatVersionMismatch, IoError
from .features import Standardization
from .learn import ClassifierBundle, OaoModel, SvmHyperParams, SvmModel

FORMAT_LINE = "magprint-model v1"


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _floats(values) -> str:
    return " ".join(_f(v) for v in np.asarray(values, dtype=float).ravel())


def _check_token(label: str) -> str:
    label = str(label)
    if not label or any(ch.isspace() for ch in label):
        raise IoError(f"label {label!r} is empty or contains whitespace; cannot serialize")
    return label


def _bundle_body(bundle: ClassifierBundle) -> str:
    lines: list[str] = []
    lines.append("feature_mask " + " ".join(str(i) for i in bundle.feature_mask))
    lines.append("classes " + " ".join(_check_token(c) for c in bundle.oao.classes))
    lines.append("mean " + _floats(bundle.stats.mean))
    lines.append("std " + _floats(bundle.stats.std))
    lines.append("constant " + " ".join(str(i) for i in bundle.stats.constant_features))
    machines = sorted(bundle.oao.machines.items())
    lines.append(f"machines {len(machines)}")
    for (pos, neg), model in machines:
        sv = model.support_mask
        lines.append(f"machine {_check_token(pos)} {_check_token(neg)}")
        lines.append(f"hyper {_f(model.hyper.gamma)} {_f(model.hyper.c)}")
        lines.append(f"bias {_f(model.bias)}")
        lines.append(f"flags {1 if model.converged else 0} {model.sweeps}")
        lines.append(f"n_sv {int(sv.sum())}")
        dual = model.alpha[sv] * model.y[sv]
        for coef, row in zip(dual, model.x[sv]):
            lines.append("sv " + _f(coef) + " " + _floats(row))
    return "\n".join(lines) + "\n"


def save_bundle(bundle: ClassifierBundle, path: str) -> None:
    body = _bundle_body(bundle)
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(FORMAT_LINE + "\n")
            fh.write(f"checksum {digest}\n")
            fh.write(body)
    except OSError as exc:
        raise IoError(f"cannot write model file {path}: {exc}") from exc


class _LineReader:
    def __init__(self, lines: list[str], path: str) -> None:
        self.lines = lines
        self.path = path
        self.pos = 0

    def next(self, expect: str) -> list[str]:
        if self.pos >= len(self.lines):
            raise CorruptModel(f"{self.path}: unexpected end of file, expected {expect!r}")
        line = self.lines[self.pos]
        self.pos += 1
        parts = line.split()
        if not parts or parts[0] != expect:
            raise CorruptModel(
                f"{self.path} line {self.pos + 2}: expected {expect!r}, got {line!r}"
            )
        return parts[1:]


def load_bundle(path: str) -> ClassifierBundle:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from exc

    lines = text.split("\n")
    if not lines or lines[0] != FORMAT_LINE:
        raise FormatVersionMismatch(
            f"{path}: bad or missing format line (expected {FORMAT_LINE!r})"
        )
    if len(lines) < 2 or not lines[1].startswith("checksum "):
        raise CorruptModel(f"{path}: missing checksum line")
    stated = lines[1].split(" ", 1)[1].strip()
    body = "\n".join(lines[2:])
    actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if stated != actual:
        raise CorruptModel(f"{path}: checksum mismatch (file edited or truncated)")

    reader = _LineReader([ln for ln in body.split("\n") if ln != ""], path)
    try:
        mask = tuple(int(v) for v in reader.next("feature_mask"))
        classes = list(reader.next("classes"))
        mean = np.array([float(v) for v in reader.next("mean")])
        std = np.array([float(v) for v in reader.next("std")])
        constant = tuple(int(v) for v in reader.next("constant"))
        (n_machines,) = reader.next("machines")
        machines: dict[tuple[str, str], SvmModel] = {}
        for _ in range(int(n_machines)):
            pos, neg = reader.next("machine")
            gamma_s, c_s = reader.next("hyper")
            (bias_s,) = reader.next("bias")
            conv_s, sweeps_s = reader.next("flags")
            (n_sv_s,) = reader.next("n_sv")
            n_sv = int(n_sv_s)
            coefs = np.empty(n_sv)
            rows = np.empty((n_sv, len(mask)))
            for r in range(n_sv):
                vals = reader.next("sv")
                if len(vals) != 1 + len(mask):
                    raise CorruptModel(
                        f"{path}: support vector row has {len(vals)} values, "
                        f"expected {1 + len(mask)}"
                    )
                coefs[r] = float(vals[0])
                rows[r] = [float(v) for v in vals[1:]]
            hyper = SvmHyperParams(gamma=float(gamma_s), c=float(c_s))
            y = np.where(coefs >= 0.0, 1.0, -1.0)
            machines[(pos, neg)] = SvmModel(
                x=np.ascontiguousarray(rows), y=y, alpha=np.abs(coefs),
                bias=float(bias_s), hyper=hyper, pos_label=pos, neg_label=neg,
                converged=conv_s == "1", sweeps=int(sweeps_s),
            )
    except (ValueError, CorruptModel) as exc:
        if isinstance(exc, CorruptModel):
            raise
        raise CorruptModel(f"{path}: malformed numeric field ({exc})") from exc

    stats = Standardization(mean=mean, std=std, constant_features=constant)
    return ClassifierBundle(feature_mask=mask, stats=stats, oao=OaoModel(classes, machines))

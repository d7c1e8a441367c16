"""Weight files, checkpoints, metrics CSVs and run configuration."""

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, FormatError
from .weights import QuantizedWeights

WEIGHT_MAGIC = b"BCGDWGT1"


def manifest_path(path):
    return Path(str(path) + ".manifest")


def write_manifest(path, entries):
    with open(path, "w", encoding="utf-8") as f:
        for key, value in entries.items():
            f.write(f"{key} = {value}\n")


def read_manifest(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def write_weights(path, values):
    """Flat float32 little-endian array after the 8-byte magic; length goes to the sidecar manifest."""
    flat = np.asarray(values, dtype="<f4").ravel()
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(flat.tobytes())
    write_manifest(manifest_path(path), {"length": flat.size, "dtype": "float32le"})


def read_weights(path):
    meta = read_manifest(manifest_path(path))
    try:
        length = int(meta["length"])
    except (KeyError, ValueError):
        raise FormatError(f"{manifest_path(path)}: missing or invalid 'length'") from None
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read weight file {path}: {exc}") from exc
    if buf[:8] != WEIGHT_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:8]!r}, expected {WEIGHT_MAGIC!r}")
    if len(buf) - 8 != 4 * length:
        raise FormatError(f"{path}: payload is {len(buf) - 8} bytes but length = {length} needs {4 * length}")
    return np.frombuffer(buf, dtype="<f4", offset=8).astype(np.float64)


def write_quantized(path, qw, w_f=None):
    """Integer levels ``q`` as a weight file; ``delta``, bits and objective in the manifest."""
    write_weights(path, qw.q)
    entries = {"length": len(qw), "dtype": "float32le", "delta": repr(float(qw.delta)), "bits": qw.bits}
    if w_f is not None:
        entries["objective"] = repr(qw.objective(w_f))
    write_manifest(manifest_path(path), entries)


def read_quantized(path):
    meta = read_manifest(manifest_path(path))
    q = read_weights(path)
    try:
        return QuantizedWeights(float(meta["delta"]), q, int(meta["bits"]))
    except KeyError as exc:
        raise FormatError(f"{manifest_path(path)}: missing {exc.args[0]!r}") from None


def level_histogram(q):
    levels, counts = np.unique(np.asarray(q, dtype=np.int64), return_counts=True)
    return {int(l): int(c) for l, c in zip(levels, counts)}


def save_checkpoint(directory, net, bits_w=None):
    """One weight file per layer weight/bias plus ``manifest.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    quant = [q for q in net.act_quantizers if q is not None]
    entries = {
        "sizes": ",".join(str(s) for s in net.sizes),
        "bits_a": quant[0].bits if quant else "none",
        "bits_w": "none" if bits_w is None else bits_w,
        "variant": quant[0].variant.value if quant else "none",
        "alphas": ",".join("none" if a is None else repr(float(a)) for a in net.alphas),
        "biases": ",".join("1" if layer.bias is not None else "0" for layer in net.layers),
        "loss": net.loss_kind.value,
    }
    for j, layer in enumerate(net.layers):
        write_weights(d / f"layer{j}.weight", layer.weight)
        if layer.bias is not None:
            write_weights(d / f"layer{j}.bias", layer.bias)
    write_manifest(d / "manifest.txt", entries)


def load_checkpoint(directory):
    from .activations import ActQuantizer
    from .network import Layer, QuantNet

    d = Path(directory)
    meta = read_manifest(d / "manifest.txt")
    try:
        sizes = [int(s) for s in meta["sizes"].split(",")]
        has_bias = [s == "1" for s in meta["biases"].split(",")]
        alphas = meta["alphas"].split(",") if meta["alphas"] else []
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{d / 'manifest.txt'}: malformed checkpoint manifest ({exc})") from None
    layers = []
    for j, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = read_weights(d / f"layer{j}.weight")
        if w.size != fan_in * fan_out:
            raise FormatError(f"layer{j}.weight has {w.size} values, expected {fan_in * fan_out}")
        b = read_weights(d / f"layer{j}.bias") if has_bias[j] else None
        layers.append(Layer(w.reshape(fan_out, fan_in), b))
    quants = [
        None if a == "none" else ActQuantizer(int(meta["bits_a"]), float(a), meta["variant"]) for a in alphas
    ]
    return QuantNet(layers, quants, meta.get("loss", "softmax_ce"))


@dataclass
class RunMetrics:
    """Append-only per-epoch records; ``(epoch, iteration)`` is the monotone clock."""

    n_alpha: int
    n_layers: int
    records: list = field(default_factory=list)

    @property
    def columns(self):
        return (
            ["epoch", "iteration", "train_loss", "train_acc", "val_acc"]
            + [f"alpha_{i}" for i in range(self.n_alpha)]
            + [f"gap_{j}" for j in range(self.n_layers)]
            + ["grad_norm_w", "grad_norm_alpha"]
        )

    def append(self, record):
        missing = set(self.columns) - set(record)
        if missing:
            raise ValueError(f"metrics record is missing {sorted(missing)}")
        if self.records:
            last = self.records[-1]
            if (record["epoch"], record["iteration"]) < (last["epoch"], last["iteration"]):
                raise ValueError("metrics records must be appended in (epoch, iteration) order")
        self.records.append({c: record[c] for c in self.columns})

    def __len__(self):
        return len(self.records)


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_csv(path, columns, rows):
    """CSV with floats written by ``repr`` so that re-reading is exact."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_metrics(metrics, path):
    write_csv(path, metrics.columns, ([r[c] for c in metrics.columns] for r in metrics.records))


def read_metrics(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    n_alpha = sum(1 for c in header if c.startswith("alpha_"))
    n_layers = sum(1 for c in header if c.startswith("gap_"))
    metrics = RunMetrics(n_alpha, n_layers)
    if header != metrics.columns:
        raise FormatError(f"{path}: unexpected metrics header {header}")
    for row in rows:
        rec = {}
        for c, v in zip(header, row):
            rec[c] = int(v) if c in ("epoch", "iteration") else float(v)
        metrics.append(rec)
    return metrics


def _parse_bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_milestones(s):
    return tuple(int(x) for x in s.replace(",", " ").split())


CONFIG_KEYS = {
    "bits_w": int,
    "bits_a": int,
    "variant": str,
    "rho": float,
    "lr": float,
    "rate_factor": float,
    "momentum": float,
    "weight_decay": float,
    "milestones": _parse_milestones,
    "decay": float,
    "epochs": int,
    "batch_size": int,
    "seed": int,
    "keep_ends_float": _parse_bool,
}


def parse_config(text, source="<config>"):
    """``key = value`` lines with ``#`` comments; unknown or repeated keys raise ``ConfigError``."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}; valid keys: {', '.join(sorted(CONFIG_KEYS))}")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{n}: bad value for {key}: {exc}") from None
    return out


def read_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, os.fspath(path))

"""Binary checkpoint format for network parameters, target copy and Adam state.

Layout: a UTF-8 text header of ``key value`` lines terminated by a line
containing only ``end``, followed by raw parameter blocks as little-endian
64-bit floats. Block order is the online parameters (hidden 1..3 weight then
bias, value head, advantage head), the target copy in the same order, then the
Adam first moments and second moments, again in block order.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .nn import AdamState, LayerParams, NetworkParams

MAGIC = "costq-checkpoint"
FORMAT_VERSION = 1

# Keys written by save_checkpoint itself; extra metadata must not collide.
_CORE_KEYS = frozenset({
    "magic", "format_version", "n_features", "n_actions", "hidden_sizes",
    "adam_step_count", "adam_beta1", "adam_beta2", "adam_eps_hat",
})


def _block_shapes(n_features: int, n_actions: int, hidden_sizes: tuple[int, ...]):
    widths = [2 * n_features, *hidden_sizes]
    shapes = []
    for i in range(3):
        shapes.append((widths[i], widths[i + 1]))
        shapes.append((widths[i + 1],))
    shapes.append((hidden_sizes[-1], 1))
    shapes.append((1,))
    shapes.append((hidden_sizes[-1], n_actions))
    shapes.append((n_actions,))
    return shapes


def save_checkpoint(path, theta: NetworkParams, phi: NetworkParams,
                    adam: AdamState, meta: dict | None = None) -> None:
    """Write parameters, target copy and optimizer state plus metadata to ``path``."""
    meta = dict(meta or {})
    bad = _CORE_KEYS.intersection(meta)
    if bad:
        raise ValueError(f"metadata keys collide with core header keys: {sorted(bad)}")

    lines = [
        f"magic {MAGIC}",
        f"format_version {FORMAT_VERSION}",
        f"n_features {theta.n_features}",
        f"n_actions {theta.n_actions}",
        "hidden_sizes " + ",".join(str(w) for w in theta.hidden_sizes),
        f"adam_step_count {adam.step_count}",
        f"adam_beta1 {adam.beta1!r}",
        f"adam_beta2 {adam.beta2!r}",
        f"adam_eps_hat {adam.eps_hat!r}",
    ]
    for key, value in meta.items():
        text = str(value)
        if "\n" in text or " " in key:
            raise ValueError(f"metadata entry {key!r} is not single-line key/value")
        lines.append(f"{key} {text}")
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("utf-8")

    blocks = (theta.blocks() + phi.blocks()
              + list(adam.first_moment) + list(adam.second_moment))
    with open(path, "wb") as fh:
        fh.write(header)
        for b in blocks:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path, dtype=np.float64):
    """Read a checkpoint; returns (theta, phi, adam, meta)."""
    with open(path, "rb") as fh:
        raw = fh.read()

    header_end = raw.find(b"\nend\n")
    if header_end < 0:
        raise DataError(f"{path}: missing checkpoint header terminator")
    header = raw[:header_end].decode("utf-8").splitlines()
    body = raw[header_end + len(b"\nend\n"):]

    fields: dict[str, str] = {}
    for line in header:
        key, _, value = line.partition(" ")
        fields[key] = value
    if fields.get("magic") != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    version = int(fields.get("format_version", "-1"))
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format version {version}")

    n_features = int(fields["n_features"])
    n_actions = int(fields["n_actions"])
    hidden_sizes = tuple(int(w) for w in fields["hidden_sizes"].split(","))
    shapes = _block_shapes(n_features, n_actions, hidden_sizes)
    counts = [int(np.prod(s)) for s in shapes]
    total = 4 * sum(counts)  # theta, phi, adam m, adam v
    if len(body) != 8 * total:
        raise DataError(
            f"{path}: parameter payload has {len(body)} bytes, expected {8 * total}"
        )

    flat = np.frombuffer(body, dtype="<f8").astype(dtype)
    arrays = []
    offset = 0
    for _ in range(4):
        group = []
        for shape, count in zip(shapes, counts):
            group.append(flat[offset:offset + count].reshape(shape).copy())
            offset += count
        arrays.append(group)

    def build(group):
        return NetworkParams(
            hidden=[LayerParams(group[0], group[1]),
                    LayerParams(group[2], group[3]),
                    LayerParams(group[4], group[5])],
            value=LayerParams(group[6], group[7]),
            advantage=LayerParams(group[8], group[9]),
        )

    theta = build(arrays[0])
    phi = build(arrays[1])
    adam = AdamState(
        first_moment=arrays[2],
        second_moment=arrays[3],
        step_count=int(fields["adam_step_count"]),
        beta1=float(fields["adam_beta1"]),
        beta2=float(fields["adam_beta2"]),
        eps_hat=float(fields["adam_eps_hat"]),
    )
    meta = {k: v for k, v in fields.items() if k not in _CORE_KEYS}
    return theta, phi, adam, meta

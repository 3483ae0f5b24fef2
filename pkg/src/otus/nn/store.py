"""Named parameter storage and the checkpoint directory format.

A checkpoint directory holds one TNSR v1 file per tensor plus ``manifest.txt``::

    kind = generator
    spec_hash = 3f2a...
    seed = 0
    epoch = 12
    spec.base_filters = 8
    ...
    [tensors]
    enc0/conv0/kernel enc0__conv0__kernel.tnsr trainable 8 1 3 3
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

from ..autodiff import Tensor, default_dtype
from ..autodiff import tnsr
from ..errors import CheckpointMismatchError, InvalidArgumentError

INIT_STD = 0.02
INIT_DESCRIPTION = f"truncated_normal(std={INIT_STD}, cut=2std); zero bias; bn gamma=1 beta=0"


def truncated_normal(rng, shape, std=INIT_STD, dtype=np.float32):
    """Normal samples redrawn until they fall within two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


def spec_hash(kind, fields):
    text = kind + ";" + ";".join(f"{k}={fields[k]}" for k in sorted(fields))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class ParameterStore:
    """Ordered map from layer path to Tensor, plus checkpoint metadata.

    Trainable entries are leaves with ``requires_grad``; buffers (batch-norm
    running statistics) are stored alongside but never receive gradients.
    """

    def __init__(self, kind, spec_fields, seed):
        self.kind = kind
        self.spec_fields = dict(spec_fields)
        self.tensors = {}
        self._trainable = []
        self.meta = {
            "kind": kind,
            "spec_hash": spec_hash(kind, self.spec_fields),
            "seed": seed,
            "epoch": 0,
            "init": INIT_DESCRIPTION,
        }

    def add(self, name, array, trainable=True):
        if name in self.tensors:
            raise InvalidArgumentError(f"duplicate parameter {name}")
        self.tensors[name] = Tensor(array, requires_grad=trainable, dtype=array.dtype.type)
        if trainable:
            self._trainable.append(name)
        return self.tensors[name]

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def trainable(self):
        """``{name: Tensor}`` of the parameters an optimizer updates."""
        return {k: self.tensors[k] for k in self._trainable}

    def is_trainable(self, name):
        return name in self._trainable

    def count(self, trainable_only=True):
        names = self._trainable if trainable_only else list(self.tensors)
        return int(sum(self.tensors[k].size for k in names))

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def digest(self):
        """Content hash over all tensors, used to check which networks a step touched."""
        h = hashlib.sha256()
        for name, t in self.tensors.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    # -- checkpoints --------------------------------------------------------
    def save(self, directory, epoch=None):
        if epoch is not None:
            self.meta["epoch"] = int(epoch)
        os.makedirs(directory, exist_ok=True)
        lines = [f"{k} = {v}" for k, v in self.meta.items()]
        lines += [f"spec.{k} = {v}" for k, v in self.spec_fields.items()]
        lines.append("[tensors]")
        for name, t in self.tensors.items():
            fname = name.replace("/", "__") + ".tnsr"
            tnsr.save(os.path.join(directory, fname), t.data)
            role = "trainable" if name in self._trainable else "buffer"
            lines.append(" ".join([name, fname, role, *map(str, t.shape)]))
        tmp = os.path.join(directory, "manifest.txt.tmp")
        with open(tmp, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, os.path.join(directory, "manifest.txt"))

    def load(self, directory):
        """Overwrite tensor values from ``directory``; the spec hash must match."""
        meta, entries = read_manifest(directory)
        if meta.get("spec_hash") != self.meta["spec_hash"] or meta.get("kind") != self.kind:
            raise CheckpointMismatchError(
                f"checkpoint spec {meta.get('kind')}/{meta.get('spec_hash')} does not match "
                f"{self.kind}/{self.meta['spec_hash']}")
        if set(entries) != set(self.tensors):
            raise CheckpointMismatchError("checkpoint tensor names differ from network")
        for name, fname in entries.items():
            arr = tnsr.load(os.path.join(directory, fname))
            t = self.tensors[name]
            if arr.shape != t.shape:
                raise CheckpointMismatchError(f"{name}: shape {arr.shape} != {t.shape}")
            t.data = arr.astype(t.dtype)
        for key in ("seed", "epoch"):
            if key in meta:
                self.meta[key] = int(meta[key])
        return self


def read_manifest(directory):
    meta, entries = {}, {}
    in_tensors = False
    with open(os.path.join(directory, "manifest.txt")) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line == "[tensors]":
                in_tensors = True
            elif in_tensors:
                name, fname = line.split()[:2]
                entries[name] = fname
            else:
                key, _, value = line.partition(" = ")
                meta[key] = value
    return meta, entries


class BatchNormBuffers:
    """Adapter exposing two store tensors as batch-norm running statistics."""

    def __init__(self, mean, var):
        self._mean, self._var = mean, var

    @property
    def mean(self):
        return self._mean.data

    @property
    def var(self):
        return self._var.data

    def update(self, mean, var_unbiased, momentum):
        dt = self._mean.dtype
        self._mean.data = ((1 - momentum) * self._mean.data + momentum * mean).astype(dt)
        self._var.data = ((1 - momentum) * self._var.data + momentum * var_unbiased).astype(dt)


def param_dtype(dtype):
    return np.dtype(dtype or default_dtype()).type

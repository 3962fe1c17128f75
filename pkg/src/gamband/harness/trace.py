"""Regret traces and their delimited-text file format."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_FORMAT_VERSION = 1
COLUMNS = ("t", "action", "reward", "inst_regret", "cum_regret", "switches", "phase")


class TraceFormatError(ValueError):
    pass


@dataclass
class RegretTrace:
    actions: np.ndarray
    rewards: np.ndarray
    inst_regret: np.ndarray
    phase: np.ndarray
    batch_log: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.inst_regret = np.asarray(self.inst_regret, dtype=float)
        self.phase = np.asarray(self.phase, dtype=np.int64)
        n = len(self.actions)
        if not (len(self.rewards) == len(self.inst_regret) == len(self.phase) == n):
            raise TraceFormatError("trace columns have different lengths")
        self.cum_regret = np.cumsum(self.inst_regret)
        sw = np.zeros(n, dtype=np.int64)
        if n > 1:
            sw[1:] = np.cumsum(self.actions[1:] != self.actions[:-1])
        self.switches = sw

    @classmethod
    def from_env(cls, env, **kw) -> "RegretTrace":
        inst = env.instance
        acts = np.asarray(env.actions, dtype=np.int64)
        regret = inst.f_star - inst.f0[acts] if len(acts) else np.zeros(0)
        return cls(acts, env.rewards, regret, env.phases, **kw)

    def __len__(self):
        return len(self.actions)

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    @property
    def switch_count(self) -> int:
        return int(self.switches[-1]) if len(self) else 0

    @property
    def batch_count(self) -> int:
        return len(self.batch_log) if self.batch_log else int(np.unique(self.phase).size)

    @property
    def total_regret(self) -> float:
        return float(self.cum_regret[-1]) if len(self) else 0.0

    def regret_at(self, T: int) -> float:
        if T > len(self):
            raise ValueError(f"trace has only {len(self)} steps, asked for R_{T}")
        return float(self.cum_regret[T - 1]) if T else 0.0

    # -- file format --------------------------------------------------------

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# format_version={TRACE_FORMAT_VERSION}\n")
        buf.write("# meta " + json.dumps(self.metadata, sort_keys=True) + "\n")
        for rec in self.batch_log:
            buf.write("# batch " + json.dumps(rec, sort_keys=True) + "\n")
        buf.write(",".join(COLUMNS) + "\n")
        for i in range(len(self)):
            buf.write(
                f"{i + 1},{self.actions[i]},{self.rewards[i]:.17g},{self.inst_regret[i]:.17g},"
                f"{self.cum_regret[i]:.17g},{self.switches[i]},{self.phase[i]}\n"
            )
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "RegretTrace":
        meta, batches, version = {}, [], None
        rows = []
        header = None
        for line in text.splitlines():
            if line.startswith("# format_version="):
                version = int(line.split("=", 1)[1])
            elif line.startswith("# meta "):
                meta = json.loads(line[7:])
            elif line.startswith("# batch "):
                batches.append(json.loads(line[8:]))
            elif line.startswith("#") or not line.strip():
                continue
            elif header is None:
                header = tuple(line.split(","))
            else:
                rows.append(line.split(","))
        if version != TRACE_FORMAT_VERSION:
            raise TraceFormatError(f"unsupported trace format_version {version!r}")
        if header != COLUMNS:
            raise TraceFormatError(f"unexpected trace header {header!r}")
        if rows:
            cols = list(zip(*rows))
            acts, rew, reg = cols[1], cols[2], cols[3]
            phase = cols[6]
        else:
            acts = rew = reg = phase = ()
        return cls(
            np.array(acts, dtype=np.int64),
            np.array(rew, dtype=float),
            np.array(reg, dtype=float),
            np.array(phase, dtype=np.int64),
            batch_log=batches,
            metadata=meta,
        )

    @classmethod
    def load(cls, path) -> "RegretTrace":
        return cls.from_text(Path(path).read_text())

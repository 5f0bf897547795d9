"""
    Per-iteration operator workload of one Encoder/Decoder layer.

    .. autoclass:: Stage
        :members:

    .. autoclass:: MatMulRole
        :members:

    .. autoclass:: NonlinearKind
        :members:

    .. autodata:: OPS_PER_ELEMENT

    .. autoclass:: TransformerConfig
        :members:

    .. autoclass:: MatMulSpec
        :members:

    .. autoclass:: NonlinearOpSpec
        :members:

    .. autoclass:: Workload
        :members:

    .. autofunction:: check_config

    .. autofunction:: load_config

    .. autofunction:: read_config

    .. autofunction:: derive_workload

    .. autofunction:: mm_count

    .. autofunction:: total_ops

    .. autofunction:: union

    .. autofunction:: stage_workload
"""

import json
import os.path
from enum import Enum
from typing import Any, Dict, Mapping, NamedTuple, Tuple

from sphinx.util.logging import getLogger

from .errors import ConfigError


logger = getLogger(__name__)

MODEL_DIR = os.path.join(os.path.dirname(__file__), 'models')
CONFIG_KEYS = ('head', 'embed_dim', 'dff', 'seq_len', 'layers', 'data_bits')
DATA_BITS = (8, 16, 32)


class Stage(str, Enum):
    MHA = 'MHA'
    FFN = 'FFN'


class MatMulRole(str, Enum):
    QKV_LB = 'QkvLB'
    ATB_QKT = 'AtbQKt'
    ATB_AV = 'AtbAV'
    PROJ_LB = 'ProjLB'
    FFN1_LB = 'Ffn1LB'
    FFN2_LB = 'Ffn2LB'


class NonlinearKind(str, Enum):
    SOFTMAX = 'Softmax'
    TRANSPOSE = 'Transpose'
    GELU = 'Gelu'
    LAYERNORM_ADD = 'LayernormAdd'


#: Operations counted per element when nonlinear operators are included
#: in :func:`total_ops`. These constants only feed reports.
OPS_PER_ELEMENT: Dict[NonlinearKind, int] = {
    NonlinearKind.SOFTMAX: 5,
    NonlinearKind.TRANSPOSE: 0,
    NonlinearKind.GELU: 8,
    NonlinearKind.LAYERNORM_ADD: 6,
}


class TransformerConfig(NamedTuple):
    """Model hyperparameters that drive the workload derivation."""
    head: int       #: Number of attention heads.
    embed_dim: int  #: Embedding dimension.
    dff: int        #: Hidden dimension of the feed forward network.
    seq_len: int    #: Sequence length L.
    layers: int     #: Number of Encoder/Decoder layers.
    data_bits: int  #: Bit width of one element.
    name: str = ''  #: Label, usually the stem of the config file.

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.head

    @property
    def bytes_per_element(self) -> int:
        return self.data_bits // 8

    def to_json(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in CONFIG_KEYS}


class MatMulSpec(NamedTuple):
    """A group of identical matrix multiplications (m x k) . (k x n)."""
    m: int
    k: int
    n: int
    count: int        #: Identical instances per iteration.
    stage: Stage
    role: MatMulRole

    @property
    def macs(self) -> int:
        return self.m * self.k * self.n

    @property
    def ops(self) -> int:
        """Operations of one instance, counting multiply and add."""
        return 2 * self.macs

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.m, self.k, self.n

    def to_json(self) -> Dict[str, Any]:
        return {'m': self.m, 'k': self.k, 'n': self.n, 'count': self.count,
                'stage': self.stage.value, 'role': self.role.value}

    @classmethod
    def from_json(cls, document: Mapping[str, Any]) -> "MatMulSpec":
        return cls(m=int(document['m']), k=int(document['k']),
                   n=int(document['n']), count=int(document['count']),
                   stage=Stage(document['stage']),
                   role=MatMulRole(document['role']))


class NonlinearOpSpec(NamedTuple):
    kind: NonlinearKind
    count: int
    rows: int
    cols: int
    stage: Stage

    @property
    def elements(self) -> int:
        return self.count * self.rows * self.cols


class Workload(NamedTuple):
    """Matrix multiplications and nonlinear operators of one iteration."""
    mms: Tuple[MatMulSpec, ...]
    nonlinear: Tuple[NonlinearOpSpec, ...]
    independent_linear: bool  #: QKV linear layers extracted and aggregated.
    cfg: TransformerConfig
    decoder: bool = False  #: Label only, shapes match the encoder.

    def has_nonlinear(self, kind: NonlinearKind) -> bool:
        return any(op.kind == kind and op.count > 0 for op in self.nonlinear)


def _check_count(document: Mapping[str, Any], key: str) -> int:
    value = document[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if value < 1:
        raise ConfigError(f"{key} must be at least 1, got {value}")
    return value


def check_config(cfg: TransformerConfig) -> TransformerConfig:
    """Check the invariants of *cfg* and return it unchanged.

    :raises ConfigError: naming the first field that is out of range.
    """
    values = cfg._asdict()
    for key in CONFIG_KEYS:
        _check_count(values, key)
    if cfg.embed_dim % cfg.head != 0:
        raise ConfigError(
            f"embed_dim ({cfg.embed_dim}) must be divisible by "
            f"head ({cfg.head})")
    if cfg.data_bits not in DATA_BITS:
        raise ConfigError(
            f"data_bits must be one of {DATA_BITS}, got {cfg.data_bits}")
    return cfg


def load_config(document: Mapping[str, Any], name: str = ''
                ) -> TransformerConfig:
    """Build a validated configuration from a parsed JSON *document*."""
    if not isinstance(document, Mapping):
        raise ConfigError("model configuration must be a JSON object")
    unknown = sorted(set(document) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(
            f"unknown model configuration key(s): {', '.join(unknown)}")
    missing = [key for key in CONFIG_KEYS if key not in document]
    if missing:
        raise ConfigError(
            f"missing model configuration key(s): {', '.join(missing)}")
    values = {key: _check_count(document, key) for key in CONFIG_KEYS}
    return check_config(TransformerConfig(name=name, **values))


def read_config(path_or_name: str) -> TransformerConfig:
    """Read a model configuration from a file, or from the built-in
    models directory when *path_or_name* is not an existing file.
    """
    if os.path.isfile(path_or_name):
        filename = path_or_name
    else:
        filename = os.path.join(MODEL_DIR, path_or_name + '.json')
        if not os.path.isfile(filename):
            raise ConfigError(f"model configuration {path_or_name} not found")
    name = os.path.splitext(os.path.basename(filename))[0]
    logger.debug(f"reading model configuration {filename}")
    try:
        with open(filename, encoding='utf-8') as stream:
            document = json.load(stream)
    except (OSError, ValueError) as exc:
        raise ConfigError(
            f"could not read model configuration {filename}: {exc}")
    return load_config(document, name=name)


def derive_workload(cfg: TransformerConfig, independent_linear: bool = True,
                    decoder: bool = False) -> Workload:
    """Operator workload of one MHA stage plus one FFN stage.

    With *independent_linear* the Q, K and V linear layers of all heads are
    aggregated into three L x embed x embed multiplications. Without it
    every head computes its own L x embed x head_dim projections.
    *decoder* only labels the workload: a decoder layer runs the same MHA
    and FFN stages, so it derives identical shapes and nothing downstream
    treats it differently.
    """
    check_config(cfg)
    L, E, hd, h = cfg.seq_len, cfg.embed_dim, cfg.head_dim, cfg.head
    mha, ffn = Stage.MHA, Stage.FFN
    if independent_linear:
        qkv = MatMulSpec(L, E, E, 3, mha, MatMulRole.QKV_LB)
    else:
        qkv = MatMulSpec(L, E, hd, 3 * h, mha, MatMulRole.QKV_LB)
    mms = (
        qkv,
        MatMulSpec(L, hd, L, h, mha, MatMulRole.ATB_QKT),
        MatMulSpec(L, L, hd, h, mha, MatMulRole.ATB_AV),
        MatMulSpec(L, E, E, 1, mha, MatMulRole.PROJ_LB),
        MatMulSpec(L, E, cfg.dff, 1, ffn, MatMulRole.FFN1_LB),
        MatMulSpec(L, cfg.dff, E, 1, ffn, MatMulRole.FFN2_LB),
    )
    nonlinear = (
        NonlinearOpSpec(NonlinearKind.SOFTMAX, h, L, L, mha),
        NonlinearOpSpec(NonlinearKind.TRANSPOSE, h, L, hd, mha),
        NonlinearOpSpec(NonlinearKind.LAYERNORM_ADD, 1, L, E, mha),
        NonlinearOpSpec(NonlinearKind.GELU, 1, L, cfg.dff, ffn),
        NonlinearOpSpec(NonlinearKind.LAYERNORM_ADD, 1, L, E, ffn),
    )
    return Workload(mms=mms, nonlinear=nonlinear,
                    independent_linear=independent_linear, cfg=cfg,
                    decoder=decoder)


def mm_count(cfg: TransformerConfig, independent_linear: bool) -> int:
    """Number of matrix multiplications per iteration."""
    if independent_linear:
        return 2 * cfg.head + 6
    return 5 * cfg.head + 3


def total_ops(w: Workload, include_nonlinear: bool = False) -> int:
    """Operation count of one iteration of *w*, two per MAC."""
    ops = sum(mm.ops * mm.count for mm in w.mms)
    if include_nonlinear:
        ops += sum(OPS_PER_ELEMENT[op.kind] * op.elements
                   for op in w.nonlinear)
    return ops


def union(w1: Workload, w2: Workload) -> Workload:
    """Concatenate the operators of two workloads."""
    return w1._replace(mms=w1.mms + w2.mms,
                       nonlinear=w1.nonlinear + w2.nonlinear)


def stage_workload(w: Workload, stage: Stage) -> Workload:
    """Restrict *w* to the operators of one *stage*."""
    return w._replace(
        mms=tuple(mm for mm in w.mms if mm.stage == stage),
        nonlinear=tuple(op for op in w.nonlinear if op.stage == stage))

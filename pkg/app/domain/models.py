from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import cv2
import numpy as np

# H x W x 3 float64 array, values in [0,1], row-major with the origin at the top-left
ImageTensor = np.ndarray
# ordered lowercase words without whitespace; may be empty
TokenSequence = List[str]
# H x W float64 array in [0,1]
ImageMask = np.ndarray
ImmoralityScore = float

MORAL = 'moral'
IMMORAL = 'immoral'

DEFAULT_JUDGE_THRESHOLD = 0.5
DEFAULT_REGION_THRESHOLD = 0.6
DEFAULT_BLUR_SIGMA = 4.0
DEFAULT_WORD_SAMPLES = 1000
DEFAULT_PIXEL_SAMPLES = 4000
DEFAULT_MASK_PROB = 0.5
DEFAULT_GRID = (8, 8)
MIN_CELL_PX = 16
DEFAULT_HIDDEN_DIM = 64

BACKEND_ROLES = ('embedder', 'generator', 'inpainter', 'captioner', 'suggester', 'editor')
LIKERT_CONDITIONS = ('original', 'blur', 'inpaint', 'word_swap', 'caption')


class Strategy(Enum):
    """Manipulation strategies with the Likert condition each one reports under"""
    BLUR = ('blur', 'blur')
    INPAINT = ('inpaint', 'inpaint')
    WORD_SWAP = ('word_swap', 'word_swap')
    CAPTION_REWRITE = ('caption_rewrite', 'caption')
    AUTO = ('auto', None)
    NONE_NEEDED = ('none-needed', None)

    def __init__(self, key, condition):
        self.key = key
        self.condition = condition

    @classmethod
    def parse(cls, key: str) -> 'Strategy':
        for strategy in cls:
            if strategy.key == key:
                return strategy
        raise ValueError(f"Unknown strategy '{key}' (expected one of {', '.join(s.key for s in cls.selectable())})")

    @classmethod
    def selectable(cls) -> List['Strategy']:
        return [cls.BLUR, cls.INPAINT, cls.WORD_SWAP, cls.CAPTION_REWRITE, cls.AUTO]

    @classmethod
    def concrete(cls) -> List['Strategy']:
        return [cls.BLUR, cls.INPAINT, cls.WORD_SWAP, cls.CAPTION_REWRITE]


@dataclass(frozen=True)
class Verdict:
    score: float
    threshold: float
    label: str

    @property
    def is_immoral(self) -> bool:
        return self.label == IMMORAL

    def to_dict(self) -> dict:
        return {
            'score': round(self.score, 6),
            'threshold': round(self.threshold, 6),
            'label': self.label,
        }


@dataclass
class LabeledTextSet:
    items: List[Tuple[TokenSequence, int]] = field(default_factory=list)

    @property
    def texts(self) -> List[TokenSequence]:
        return [words for words, _ in self.items]

    @property
    def labels(self) -> List[int]:
        return [label for _, label in self.items]

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class TrainingConfig:
    epochs: int = 500
    learning_rate: float = 0.002
    weight_decay: float = 0.01
    batch_size: int = 128
    dropout: float = 0.3
    epsilon: float = 1e-8
    seed: int = 0
    hidden_dim: int = DEFAULT_HIDDEN_DIM

    def to_dict(self) -> dict:
        return {
            'epochs': self.epochs,
            'learning_rate': self.learning_rate,
            'weight_decay': self.weight_decay,
            'batch_size': self.batch_size,
            'dropout': self.dropout,
            'epsilon': self.epsilon,
            'seed': self.seed,
            'hidden_dim': self.hidden_dim,
        }


@dataclass
class TrainingLog:
    epoch_losses: List[float] = field(default_factory=list)
    final_accuracy: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            'epochs': len(self.epoch_losses),
            'epoch_losses': [round(loss, 6) for loss in self.epoch_losses],
            'final_accuracy': round(self.final_accuracy, 6) if self.final_accuracy is not None else None,
        }


@dataclass
class ClassifierHead:
    """Dropout -> Linear(D,H) -> Tanh -> Dropout -> Linear(H,1); outputs a logit"""
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout: float = 0.3

    @property
    def input_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def hidden_dim(self) -> int:
        return int(self.w1.shape[1])

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int = DEFAULT_HIDDEN_DIM, dropout: float = 0.3) -> 'ClassifierHead':
        return cls(
            w1=np.zeros((input_dim, hidden_dim)),
            b1=np.zeros(hidden_dim),
            w2=np.zeros(hidden_dim),
            b2=np.zeros(1),
            dropout=dropout,
        )

    def parameters(self) -> Dict[str, np.ndarray]:
        return {'w1': self.w1, 'b1': self.b1, 'w2': self.w2, 'b2': self.b2}


@dataclass
class MaskBatch:
    """A batch of word or image masks plus the parameters that produced it.

    Image batches keep only the low-resolution grids and crop offsets and
    materialize each full-size mask on access, so K masks of a 512x512 image
    never sit in memory together.
    """
    kind: str
    sample_count: int
    mask_prob: float
    seed: Optional[int]
    shape: Tuple[int, ...]
    grid: Optional[Tuple[int, int]] = None
    word_bits: Optional[np.ndarray] = None
    grids: Optional[np.ndarray] = None
    shifts: Optional[np.ndarray] = None
    upsample: bool = False

    def __len__(self) -> int:
        return self.sample_count

    def __iter__(self):
        for index in range(self.sample_count):
            yield self[index]

    def __getitem__(self, index: int) -> np.ndarray:
        if self.kind == 'word':
            return self.word_bits[index]
        grid = self.grids[index].astype(np.float64)
        if not self.upsample:
            return grid
        height, width = self.shape
        cell_h = -(-height // self.grid[0])
        cell_w = -(-width // self.grid[1])
        up_h = (self.grid[0] + 1) * cell_h
        up_w = (self.grid[1] + 1) * cell_w
        upsampled = cv2.resize(grid, (up_w, up_h), interpolation=cv2.INTER_LINEAR)
        dy, dx = int(self.shifts[index][0]), int(self.shifts[index][1])
        return np.clip(upsampled[dy:dy + height, dx:dx + width], 0.0, 1.0)

    @property
    def masks(self) -> List[np.ndarray]:
        return [self[index] for index in range(self.sample_count)]


@dataclass
class WordImportanceEntry:
    word: str
    importance: Optional[float]
    support: int

    @property
    def defined(self) -> bool:
        return self.importance is not None


@dataclass
class WordImportanceMap:
    entries: List[WordImportanceEntry]
    sample_count: int
    mask_prob: float
    seed: Optional[int]
    exhaustive: bool = False

    @property
    def words(self) -> List[str]:
        return [entry.word for entry in self.entries]

    @property
    def scores(self) -> List[Optional[float]]:
        return [entry.importance for entry in self.entries]

    def argmax(self) -> int:
        """Index of the most important word; ties go to the earliest position"""
        best_index, best_value = None, None
        for index, entry in enumerate(self.entries):
            if entry.importance is None:
                continue
            if best_value is None or entry.importance > best_value:
                best_index, best_value = index, entry.importance
        if best_index is None:
            return 0
        return best_index

    def to_dict(self) -> dict:
        return {
            'entries': [
                {
                    'word': entry.word,
                    'importance': round(entry.importance, 6) if entry.importance is not None else None,
                    'support': entry.support,
                }
                for entry in self.entries
            ],
            'sample_count': self.sample_count,
            'mask_prob': self.mask_prob,
            'seed': self.seed,
            'exhaustive': self.exhaustive,
        }


@dataclass
class SaliencyMap:
    values: np.ndarray
    sample_count: int
    grid: Tuple[int, int]
    mask_prob: float
    seed: Optional[int]
    uncovered_pixels: int = 0
    exhaustive: bool = False

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.values.shape)

    def metadata(self) -> dict:
        return {
            'height': int(self.values.shape[0]),
            'width': int(self.values.shape[1]),
            'sample_count': self.sample_count,
            'grid': list(self.grid),
            'mask_prob': self.mask_prob,
            'seed': self.seed,
            'uncovered_pixels': self.uncovered_pixels,
            'exhaustive': self.exhaustive,
        }


@dataclass
class RegionSelection:
    threshold: float
    mask: np.ndarray
    pixel_count: int

    @property
    def is_empty(self) -> bool:
        return self.pixel_count == 0


@dataclass
class ManipulationResult:
    strategy: Strategy
    input_image: np.ndarray
    output_image: np.ndarray
    pre_score: float
    post_score: float
    threshold: float
    seed: int
    provenance: Dict[str, Any] = field(default_factory=dict)
    source_id: str = ''
    # artifacts kept for export, not part of to_dict()
    region: Optional[np.ndarray] = None
    saliency: Optional[SaliencyMap] = None
    word_map: Optional[WordImportanceMap] = None

    @property
    def verdict(self) -> Verdict:
        label = IMMORAL if self.post_score >= self.threshold else MORAL
        return Verdict(score=self.post_score, threshold=self.threshold, label=label)

    @property
    def still_immoral(self) -> bool:
        return self.verdict.is_immoral

    @property
    def improved(self) -> bool:
        return self.post_score < self.pre_score

    def to_dict(self) -> dict:
        return {
            'strategy': self.strategy.key,
            'source_id': self.source_id,
            'pre_score': round(self.pre_score, 6),
            'post_score': round(self.post_score, 6),
            'verdict': self.verdict.label,
            'still_immoral': self.still_immoral,
            'seed': self.seed,
            'provenance': self.provenance,
        }


@dataclass
class AccuracyRow:
    dataset: str
    item_count: int
    correct: int
    threshold: float

    @property
    def accuracy(self) -> float:
        return self.correct / self.item_count

    def to_dict(self) -> dict:
        return {
            'dataset': self.dataset,
            'item_count': self.item_count,
            'correct': self.correct,
            'accuracy': round(self.accuracy, 6),
            'threshold': self.threshold,
        }


@dataclass
class AccuracyReport:
    rows: List[AccuracyRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {'rows': [row.to_dict() for row in self.rows]}


@dataclass(frozen=True)
class LikertRecord:
    evaluator_id: str
    image_id: str
    condition: str
    rating: int


@dataclass
class ConditionSummary:
    condition: str
    mean: float
    sd: float
    n: int

    def to_dict(self) -> dict:
        return {'condition': self.condition, 'mean': round(self.mean, 6), 'sd': round(self.sd, 6), 'n': self.n}


@dataclass
class StrategyScoreSummary:
    rows: List[ConditionSummary] = field(default_factory=list)

    def get(self, condition: str) -> Optional[ConditionSummary]:
        for row in self.rows:
            if row.condition == condition:
                return row
        return None

    @property
    def conditions(self) -> List[str]:
        return [row.condition for row in self.rows]

    def to_dict(self) -> dict:
        return {'rows': [row.to_dict() for row in self.rows]}


@dataclass
class BackendConfig:
    kind: str = 'stub'
    endpoint: str = ''
    embedding_dim: int = 8
    seed: int = 0
    max_in_flight: int = 4
    timeout: float = 60.0

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'endpoint': self.endpoint,
            'embedding_dim': self.embedding_dim,
            'seed': self.seed,
            'max_in_flight': self.max_in_flight,
            'timeout': self.timeout,
        }


@dataclass
class RecognizerSettings:
    head_path: str = 'out/head.bin'
    threshold: float = DEFAULT_JUDGE_THRESHOLD
    training: TrainingConfig = field(default_factory=TrainingConfig)


@dataclass
class AttributionSettings:
    word_samples: int = DEFAULT_WORD_SAMPLES
    pixel_samples: int = DEFAULT_PIXEL_SAMPLES
    mask_prob: float = DEFAULT_MASK_PROB
    # None resolves per image: DEFAULT_GRID at most, cells no smaller than MIN_CELL_PX
    grid: Optional[Tuple[int, int]] = None
    workers: int = 1


@dataclass
class ManipulationSettings:
    region_threshold: float = DEFAULT_REGION_THRESHOLD
    blur_sigma: float = DEFAULT_BLUR_SIGMA
    strategy: str = 'auto'


@dataclass
class PipelineConfig:
    backends: Dict[str, BackendConfig] = field(default_factory=lambda: {role: BackendConfig() for role in BACKEND_ROLES})
    recognizer: RecognizerSettings = field(default_factory=RecognizerSettings)
    attribution: AttributionSettings = field(default_factory=AttributionSettings)
    manipulation: ManipulationSettings = field(default_factory=ManipulationSettings)
    seed: int = 0
    output_dir: str = 'out'

    @property
    def threshold(self) -> float:
        return self.recognizer.threshold

    def to_dict(self) -> dict:
        return {
            'backends': {role: cfg.to_dict() for role, cfg in sorted(self.backends.items())},
            'recognizer': {
                'head_path': self.recognizer.head_path,
                'threshold': self.recognizer.threshold,
                'training': self.recognizer.training.to_dict(),
            },
            'attribution': {
                'word_samples': self.attribution.word_samples,
                'pixel_samples': self.attribution.pixel_samples,
                'mask_prob': self.attribution.mask_prob,
                'grid': list(self.attribution.grid) if self.attribution.grid else 'auto',
                'workers': self.attribution.workers,
            },
            'manipulation': {
                'region_threshold': self.manipulation.region_threshold,
                'blur_sigma': self.manipulation.blur_sigma,
                'strategy': self.manipulation.strategy,
            },
            'seed': self.seed,
            'output_dir': self.output_dir,
        }

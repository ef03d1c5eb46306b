"""Model hijacking attacks on image classifiers, end to end: a Camouflager
that disguises a hijacking dataset as another dataset, data-poisoning attack
variants built on it, evaluation metrics, and defenses.
"""

from .attack import (
    AttackConfig,
    AttackResult,
    HierarchicalScheme,
    TriggerPatch,
    TriggerSpec,
    apply_trigger,
    build_payload,
    default_triggers,
    draw_poison_pairs,
    execute_query,
    hierarchical_prepare,
    hierarchical_query,
    run_attack,
)
from .camouflager import (
    CamouflagerModel,
    DecoderSpec,
    EncoderSpec,
    camouflage,
    camouflage_in_chunks,
    expected_parameter_count,
    init_camouflager,
    load_camouflager,
    parameter_count,
    save_camouflager,
)
from .config import ExperimentConfig, load_config, parse_config
from .data import (
    DatasetRole,
    ImageBatch,
    LabeledDataset,
    LabelMapping,
    assemble_poisoned,
    build_celeba_labels,
    build_label_mapping,
    pair_epoch,
    rescale_and_channelize,
    sample_hijackee,
)
from .defense import (
    DenoiserModel,
    EntropyFilter,
    denoise,
    entropy_filter_apply,
    evaluate_defense,
    sweep_entropy_thresholds,
    train_denoiser,
)
from .errors import (
    CapacityError,
    ConfigError,
    DivergenceError,
    StageError,
    WeightsUnavailableError,
)
from .evaluation import (
    EvalReport,
    attack_success_rate,
    camouflage_queries,
    entropy_distribution,
    entropy_histogram_overlap,
    euclidean_stealthiness,
    non_camouflaged_accuracy,
    prediction_entropy,
    tsne_embed,
    utility,
)
from .features import (
    FeatureExtractor,
    extract,
    load_backbone,
    resolve_weights_dir,
    train_small_extractor,
)
from .losses import (
    LossConfig,
    adverse_chameleon_loss,
    adverse_semantic_loss,
    chameleon_loss,
    composite_loss,
    semantic_loss,
    visual_loss,
)
from .training import (
    OptimizerConfig,
    TargetModel,
    TrainingTrace,
    build_target,
    load_target,
    predict,
    save_target,
    train_camouflager,
    train_target,
)

__version__ = "0.1.0"

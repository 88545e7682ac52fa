"""poolforge: budget-cycled active learning on feature pools."""

from .acquisition import (
    AcquisitionRequest,
    ScoredSelection,
    acquire_entropy,
    acquire_kcenter_greedy,
    acquire_random,
    acquire_svm_min_margin,
)
from .advisor import (
    LearningCurve,
    LineFit,
    ThresholdPoint,
    advise_budget,
    average_curves,
    find_crossover,
    fit_threshold_line,
    pearson_corr,
)
from .data import (
    BlobSpec,
    BudgetSchedule,
    FeatureDataset,
    LabelOracle,
    PoolState,
    SplitSpec,
    generate_blobs,
    initial_split,
    load_dataset,
    query_oracle,
    save_dataset,
)
from .linear import (
    ProbeTrainConfig,
    SoftmaxProbe,
    SvmOvrModel,
    predict_proba,
    svm_decision_values,
    train_encoder_supervised,
    train_probe,
    train_svm_ovr,
)
from .orchestrator import (
    CycleRecord,
    ExperimentConfig,
    RunResult,
    emit_curve,
    evaluate_accuracy,
    run_experiment,
)
from .siamese import (
    AugmentConfig,
    NetConfig,
    SiamNet,
    SiamTrainConfig,
    ViewPair,
    augment_vector,
    encode,
    embedding_spread,
    load_net,
    save_net,
    siam_forward,
    siam_gradients,
    siam_loss,
    train_simsiam,
)

__version__ = "0.1.0"

"""baroleak: barometer side-channel toolkit.

Simulates the pressure signature a sealed phone's barometer picks up from
speaker playback and finger taps, ingests real trace CSVs, and classifies
fixed-length records with hand-rolled SMO support vector machines under
repeated stratified cross validation.
"""

from baroleak.evaluate import (
    ConfusionMatrix,
    EvalReport,
    FoldPlan,
    confusion_probabilities,
    cross_validate,
    report_from_json,
    report_to_json,
    stratified_kfold,
)
from baroleak.prep import (
    SegmentationProtocol,
    apply_pipeline,
    parse_pipeline,
    savgol,
    savgol_coefficients,
    segment,
    standardize,
    transform_dataset,
)
from baroleak.sim import (
    GenerationSpec,
    SimulatorConfig,
    SpeakerSource,
    TapProfile,
    default_generation_spec,
    derive_record_seed,
    key_task_profile,
    parse_generation_config,
    simulate_idle,
    simulate_speaker,
    simulate_tap,
    step_pressure,
    synth_dataset,
)
from baroleak.svm import (
    SvmModel,
    SvmParams,
    decision_function,
    load_model,
    predict,
    predict_batch,
    save_model,
    train,
    train_binary,
    train_multiclass,
)
from baroleak.trace import (
    Dataset,
    DatasetFormatError,
    Label,
    LabeledRecord,
    NO_TAP,
    PressureTrace,
    SPEAKER_ACTIVE,
    SPEAKER_INACTIVE,
    TAP,
    TraceFormatError,
    format_trace_csv,
    key_label,
    parse_trace_csv,
    read_dataset,
    write_dataset,
)

__version__ = "0.1.0"

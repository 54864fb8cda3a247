"""Word-level style segmentation, hierarchical style encoding, and
style-conditioned non-autoregressive speech synthesis on a numpy core."""

from .audio import (
    AudioClip,
    FrameAnalysis,
    MelConfig,
    MelSpectrogram,
    analyze_frames,
    griffin_lim_invert,
    load_wav,
    mel_spectrogram,
    normalize_loudness,
    resample,
    save_wav,
)
from .segmentation import (
    AlignmentPath,
    CrossAttentionMatrix,
    StyleSegment,
    WordInterval,
    dtw_align,
    intervals_from_path,
    load_timestamps,
    random_slice_segments,
    slice_segments,
)
from .style_encoder import (
    AttentionOverride,
    AttentionRecord,
    GlobalStyle,
    GsaConfig,
    LocalStyle,
    encode_style,
    gse_forward,
    lse_forward,
    mean_local_styles,
)
from .acoustic import (
    AcousticConfig,
    DurationSeq,
    PitchSeq,
    TextSequence,
    cln,
    length_regulate,
    synthesize_mel,
)
from .training import (
    Checkpoint,
    GradCheckReport,
    LossReport,
    TrainConfig,
    adam_step,
    grad_check,
    noam_lr,
    total_loss,
    train,
)
from .evaluation import (
    PosAttentionStats,
    SpeakerEmbedding,
    cer,
    edit_distance,
    embed_speaker,
    pos_attention_stats,
    pos_override_experiment,
    secs,
    voiced_frame_ratio,
    wer,
)

__version__ = "0.1.0"

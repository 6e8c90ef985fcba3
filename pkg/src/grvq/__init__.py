"""Group-residual vector quantization audio codec toolkit."""

from .bitstream import (
    CodecConfig,
    StreamHeader,
    bitrate_of,
    decode_payload,
    deserialize_model,
    encode_payload,
    frame_rate_of,
    serialize_model,
)
from .frontend import (
    AudioSignal,
    MelSpec,
    mdct_analyze,
    mdct_synthesize,
    mel_distance,
    mel_spectrogram,
    snr_db,
)
from .losses import (
    DiscriminatorOutputs,
    LossWeights,
    adv_hinge_loss,
    disc_hinge_loss,
    feature_match_loss,
    generator_total,
    reconstruction_loss,
)
from .quantizer import (
    FitConfig,
    GrvqModel,
    RvqStack,
    commitment_grad_check,
    commitment_loss,
    fit_grvq,
    grvq_apply,
    grvq_decode,
    rvq_apply,
    split_groups,
)
from .vq import Codebook, ema_update, kmeans_init, nearest_code, quantize_batch, reinit_dead_entries

__version__ = "0.1.0"

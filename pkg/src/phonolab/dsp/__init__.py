"""Signal-processing kernel used by the analyser and the synthesiser."""

from .features import (
    acoustic_features,
    lpc_to_cepstrum,
    mel_cepstra,
    plp_features,
    plp_static,
    pre_emphasis,
)
from .framing import (
    FRAME_SHIFT,
    SAMPLE_RATE,
    WINDOW_LEN,
    Waveform,
    append_deltas,
    frame_signal,
    num_frames,
    overlap_add,
    stack_context,
    synthesis_window,
)
from .lpc import (
    RootFindingError,
    autocorrelation,
    estimate_formants,
    inverse_filter,
    levinson,
    lpc_analysis,
    lpc_to_lsp,
    lsp_to_lpc,
)
from .source import estimate_f0, estimate_glottal_pole, estimate_hnr

__all__ = [
    "FRAME_SHIFT", "SAMPLE_RATE", "WINDOW_LEN", "RootFindingError", "Waveform",
    "acoustic_features", "append_deltas", "autocorrelation", "estimate_f0", "estimate_formants",
    "estimate_glottal_pole", "estimate_hnr", "frame_signal", "inverse_filter", "levinson",
    "lpc_analysis", "lpc_to_cepstrum", "lpc_to_lsp", "lsp_to_lpc", "mel_cepstra",
    "num_frames", "overlap_add", "plp_features", "plp_static", "pre_emphasis",
    "stack_context", "synthesis_window",
]

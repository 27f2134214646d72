from .frontend import (
    AudioBuffer,
    MelConfig,
    Spectrogram,
    StftConfig,
    fit_frames,
    hann_window,
    hz_to_mel,
    load_spectrogram,
    mel_center_frequencies,
    mel_filterbank,
    mel_power_spectrogram,
    mel_to_hz,
    save_spectrogram,
    stft,
)
from .wav import parse_wav, read_wav, write_wav

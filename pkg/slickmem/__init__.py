"""
Python package for memory-augmented oil spill segmentation of unordered SAR
image streams. Main components:

    MemoryPipeline - class of objects that segment one image after another,
        attending to a bank of texture, structure and semantic memories
        distilled from earlier images and refreshing that bank only when an
        image differs enough from what has been seen

    run_stream, ablate - functions to process a whole stream specification,
        writing masks and a JSON-lines run log, or to compare the
        fusion/gating/bank ablation configurations on it

    synth_scene, materialize_stream - synthetic speckled SAR scenes with
        oil slicks, look-alikes and ground truth

    ConfusionCounts, miou, evaluation_report - segmentation metrics

    PipelineConfig - all settings of a run, readable from an INI file

"""
__version__ = '0.1.0'

from .errors import SlickMemError  # NOQA
from .config import PipelineConfig  # NOQA
from .scene_io import SarImage, LabelMap, PromptSpec, Click, Box, StreamSpec, Regime, standard_drift_spec  # NOQA
from .synthesis import synth_scene, synth_prompt, materialize_stream  # NOQA
from .memory_bank import MemoryBank, merged_bank_mode  # NOQA
from .metrics import ConfusionCounts, miou, evaluation_report  # NOQA
from .pipeline import MemoryPipeline, run_stream, ablate, ABLATION_ROWS  # NOQA

"""Speaker diarization back-end toolkit.

Turns frame-level speech posteriors and externally computed speaker
embeddings into speaker-attributed timelines (VAD post-processing,
PLDA-scored agglomerative clustering, VB-HMM refinement) and scores
hypotheses with DER and JER.
"""

from .ahc import AhcConfig, ClusterAssignment, ahc_cluster
from .core import (Annotation, RttmParseError, Timeline, Turn, Uem,
                   parse_rttm, parse_uem, write_rttm, write_uem)
from .embeddings import (EmbeddingSet, SubsegmentSpec, load_embeddings,
                         make_subsegments)
from .metrics import ScoreConfig, ScoreReport, der, jer, optimal_mapping, score
from .pipeline import PipelineConfig, PipelineResult, diarize_recording
from .plda import (PldaModel, PreprocessedSet, fit_plda_model, llr_pair,
                   load_plda_model, preprocess, similarity_matrix,
                   write_plda_model)
from .sim import SimConfig, Simulation, simulate
from .vad import (PosteriorTrack, VadConfig, run_vad, segment, smooth_speech,
                  threshold_posteriors)
from .vbhmm import VbhmmConfig, VbhmmState, vb_resegment

__version__ = "0.1.0"

__all__ = [
    "AhcConfig", "Annotation", "ClusterAssignment", "EmbeddingSet",
    "PipelineConfig", "PipelineResult", "PldaModel", "PosteriorTrack",
    "PreprocessedSet", "RttmParseError", "ScoreConfig", "ScoreReport",
    "SimConfig", "Simulation", "SubsegmentSpec", "Timeline", "Turn", "Uem",
    "VadConfig", "VbhmmConfig", "VbhmmState", "ahc_cluster", "der",
    "diarize_recording", "fit_plda_model", "jer", "llr_pair",
    "load_embeddings", "load_plda_model", "make_subsegments",
    "optimal_mapping", "parse_rttm", "parse_uem", "preprocess", "run_vad",
    "score", "segment", "simulate", "similarity_matrix", "smooth_speech",
    "threshold_posteriors", "vb_resegment", "write_plda_model", "write_rttm",
    "write_uem",
]

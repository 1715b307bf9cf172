"""End-to-end diarization of one recording from posteriors and embeddings.

Stage order: VAD post-processing, subsegmentation, embedding binding,
similarity scoring, agglomerative clustering, optional VB-HMM refinement,
and conversion of labeled subsegments to speaker turns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ahc import AhcConfig, ClusterAssignment, ahc_cluster
from .core import Annotation, Turn
from .embeddings import Anchor, EmbeddingSet, SubsegmentSpec, make_subsegments
from .metrics import ScoreConfig
from .plda import PldaModel, PreprocessedSet, preprocess, similarity_matrix
from .vad import PosteriorTrack, VadConfig, run_vad
from .vbhmm import VbhmmConfig, VbhmmState, vb_resegment


@dataclass(frozen=True)
class PipelineConfig:
    vad: VadConfig = VadConfig()
    subseg: SubsegmentSpec = SubsegmentSpec()
    ahc: AhcConfig = AhcConfig()
    vb: VbhmmConfig = VbhmmConfig()
    score: ScoreConfig = ScoreConfig()
    skip_vb: bool = False
    apply_preprocess: bool = True  # off when embeddings are already in scoring space


@dataclass
class PipelineResult:
    recording_id: str
    hypothesis: Annotation
    anchors: list[Anchor] = field(default_factory=list)
    labels: tuple[int, ...] = ()
    ahc_assignment: ClusterAssignment | None = None
    vb_state: VbhmmState | None = None


def labels_to_turns(recording_id: str, anchors: list[Anchor],
                    labels, speaker_format: str = "spk{:02d}") -> Annotation:
    """Merge consecutively labeled subsegments into speaker turns.

    Adjacent anchors with the same label merge whenever they touch or
    overlap; between different labels the boundary is placed at the midpoint
    of the overlap region. A positive gap always closes the current turn.
    """
    turns = []
    cur_on = cur_end = None
    cur_label = None
    for (onset, dur), label in zip(anchors, labels):
        offset = onset + dur
        if cur_label is None:
            cur_on, cur_end, cur_label = onset, offset, label
            continue
        if label == cur_label and onset <= cur_end:
            cur_end = max(cur_end, offset)
            continue
        if label != cur_label and onset < cur_end:
            boundary = (onset + cur_end) // 2
            boundary = min(max(boundary, cur_on + 1), offset - 1)
            turns.append(Turn(recording_id, cur_on, boundary - cur_on,
                              speaker_format.format(cur_label)))
            cur_on, cur_end, cur_label = boundary, offset, label
            continue
        turns.append(Turn(recording_id, cur_on, cur_end - cur_on,
                          speaker_format.format(cur_label)))
        cur_on, cur_end, cur_label = onset, offset, label
    if cur_label is not None:
        turns.append(Turn(recording_id, cur_on, cur_end - cur_on,
                          speaker_format.format(cur_label)))
    return Annotation.from_turns(turns)


def compute_anchors(track: PosteriorTrack, config: PipelineConfig) -> list[Anchor]:
    segments = run_vad(track, config.vad)
    spans = [tl.span_ms for tl in segments if tl.span_ms is not None]
    return make_subsegments(spans, config.subseg)


def diarize_recording(track: PosteriorTrack, embeddings: EmbeddingSet,
                      model: PldaModel, config: PipelineConfig) -> PipelineResult:
    """Run the full clustering back-end for one recording.

    ``embeddings`` must carry one row per anchor that
    :func:`compute_anchors` derives for this track and config.
    """
    rec = track.recording_id
    anchors = list(embeddings.anchors)
    if not anchors:
        return PipelineResult(rec, Annotation())
    if config.apply_preprocess:
        pre = preprocess(embeddings, model)
    else:
        if embeddings.dim != model.latent_dim:
            raise ValueError(
                f"embeddings have dim {embeddings.dim}, "
                f"psi expects {model.latent_dim}")
        pre = PreprocessedSet(rec, embeddings.anchors, embeddings.vectors)

    similarity = similarity_matrix(pre, model)
    ahc_assignment = ahc_cluster(similarity, config.ahc)
    vb_state = None
    if config.skip_vb:
        final = ahc_assignment
    else:
        final, vb_state = vb_resegment(pre, model.psi, ahc_assignment, config.vb)
    hypothesis = labels_to_turns(rec, anchors, final.labels)
    return PipelineResult(rec, hypothesis, anchors, final.labels,
                          ahc_assignment, vb_state)

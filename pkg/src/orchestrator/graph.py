"""
Graphe d'exécution LangGraph d'une identité : chargement, filtrage,
planification des poses, rendu puis enregistrement.
"""
from pathlib import Path
from typing import Any, List, Optional, TypedDict

from langgraph.graph import END, StateGraph

from src.geometry.finger3d import DEFAULT_SLAB, UnfoldedSurface, unfold_finger
from src.geometry.poseproject import Canvas, RollPose, render_pose
from src.imaging.imagecore import DEFAULT_PPI, GrayImage, foreground_ratio
from src.orchestrator.sweep import (
    DEFAULT_FG_THRESHOLD,
    DEFAULT_QUALITY_THRESHOLD,
    FilterResult,
    IdentityInput,
    IdentityRecord,
    QualityHook,
    RenderEntry,
    SweepSpec,
    derive_seed,
    filter_identity,
    plan_sweep,
    theta_filename,
)
from src.utils.errors import FpforgeError
from src.utils.logger import ActionType, console, log_experiment
from src.utils.tools import read_cloud, read_pgm, write_json, write_pgm

RECORD_FILE = "record.json"
# Erreurs enregistrées pour l'identité sans interrompre le lot
IDENTITY_ERRORS = (FpforgeError, OSError, ValueError)


class IdentityState(TypedDict):
    """État d'une identité le long du graphe."""
    identity: IdentityInput
    texture: Optional[GrayImage]
    filter: Optional[FilterResult]
    poses: List[RollPose]
    surface: Optional[UnfoldedSurface]
    renders: List[RenderEntry]
    error: Optional[str]
    record: Optional[IdentityRecord]


class IdentityWorkflow:
    """Traitement complet d'une identité ; une invocation du graphe par identité."""

    def __init__(self, spec: SweepSpec, out_dir: str, seed: int,
                 fg_threshold: float = DEFAULT_FG_THRESHOLD,
                 quality_hook: Optional[QualityHook] = None,
                 quality_threshold: float = DEFAULT_QUALITY_THRESHOLD,
                 canvas: Canvas = Canvas(), slab: float = DEFAULT_SLAB, ppi: int = DEFAULT_PPI):
        self.spec = spec
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.fg_threshold = fg_threshold
        self.quality_hook = quality_hook
        self.quality_threshold = quality_threshold
        self.canvas = canvas
        self.slab = slab
        self.ppi = ppi
        self.graph = self._build_graph()

    def _build_graph(self):
        workflow = StateGraph(IdentityState)

        workflow.add_node("load", self._load)
        workflow.add_node("filter_step", self._filter)
        workflow.add_node("plan", self._plan)
        workflow.add_node("render", self._render)
        workflow.add_node("record_step", self._record)

        workflow.set_entry_point("load")
        workflow.add_conditional_edges("load", self._continue_or_record,
                                       {"CONTINUE": "filter_step", "RECORD": "record_step"})
        workflow.add_conditional_edges("filter_step", self._decide_after_filter,
                                       {"PLAN": "plan", "RECORD": "record_step"})
        workflow.add_conditional_edges("plan", self._continue_or_record,
                                       {"CONTINUE": "render", "RECORD": "record_step"})
        workflow.add_edge("render", "record_step")
        workflow.add_edge("record_step", END)

        return workflow.compile()

    def _identity_dir(self, state: IdentityState) -> Path:
        return self.out_dir / state["identity"].identity_id

    # --- Nœuds ---

    def _load(self, state: IdentityState) -> IdentityState:
        identity = state["identity"]
        try:
            return {**state, "texture": read_pgm(identity.texture_path, self.ppi)}
        except IDENTITY_ERRORS as error:
            return {**state, "error": f"chargement texture : {error}"}

    def _filter(self, state: IdentityState) -> IdentityState:
        try:
            verdict = filter_identity(state["texture"], self.fg_threshold, self.quality_hook,
                                      self.quality_threshold)
        except IDENTITY_ERRORS as error:
            return {**state, "error": f"filtrage : {error}"}
        log_experiment(
            "pipeline",
            ActionType.FILTER,
            details={
                "inputs": {"identity": state["identity"].identity_id,
                           "fg_threshold": self.fg_threshold},
                "outputs": verdict.to_dict(),
            },
            status="SUCCESS"
        )
        return {**state, "filter": verdict}

    def _plan(self, state: IdentityState) -> IdentityState:
        identity = state["identity"]
        try:
            poses = plan_sweep(self.spec, derive_seed(self.seed, identity.identity_id))
            surface = unfold_finger(read_cloud(identity.cloud_path), self.slab, self.ppi)
        except IDENTITY_ERRORS as error:
            return {**state, "error": f"dépliage : {error}"}
        return {**state, "poses": poses, "surface": surface}

    def _render(self, state: IdentityState) -> IdentityState:
        target = self._identity_dir(state)
        renders = []
        for pose in state["poses"]:
            try:
                projected = render_pose(state["surface"], state["texture"], pose, self.canvas)
                target.mkdir(parents=True, exist_ok=True)
                path = target / theta_filename(pose.theta)
                write_pgm(str(path), projected.img)
            except IDENTITY_ERRORS as error:
                return {**state, "renders": renders, "error": f"rendu theta={pose.theta:g} : {error}"}
            renders.append(RenderEntry(
                theta=pose.theta,
                image_path=path.relative_to(self.out_dir).as_posix(),
                delta_u=projected.delta_u,
                foreground_ratio=foreground_ratio(projected.visibility_mask),
            ))
        return {**state, "renders": sorted(renders, key=lambda r: r.theta)}

    def _record(self, state: IdentityState) -> IdentityState:
        identity = state["identity"]
        verdict = state["filter"]
        record = IdentityRecord(
            identity_id=identity.identity_id,
            texture_path=identity.texture_path,
            cloud_path=identity.cloud_path,
            renders=list(state["renders"]),
            passed_filter=bool(verdict and verdict.passed),
            filter=verdict,
            error=state["error"],
        )
        target = self._identity_dir(state)
        target.mkdir(parents=True, exist_ok=True)
        write_json(str(target / RECORD_FILE), record.to_dict())

        if record.error:
            console(f"❌ {identity.identity_id} : {record.error}", "error")
        elif record.passed_filter:
            console(f"✓ {identity.identity_id} : {len(record.renders)} rendu(s)", "success")
        else:
            console(f"⚠️ {identity.identity_id} filtrée ({', '.join(verdict.reasons)})", "warning")
        log_experiment(
            "pipeline",
            ActionType.SWEEP,
            details={
                "inputs": {"identity": identity.identity_id, "seed": self.seed},
                "outputs": {"status": record.status, "renders": len(record.renders)},
            },
            status="FAILURE" if record.error else "SUCCESS"
        )
        return {**state, "record": record}

    # --- Décisions ---

    def _continue_or_record(self, state: IdentityState) -> str:
        return "RECORD" if state["error"] else "CONTINUE"

    def _decide_after_filter(self, state: IdentityState) -> str:
        if state["error"] or not state["filter"].passed:
            return "RECORD"
        return "PLAN"

    def run(self, identity: IdentityInput) -> IdentityRecord:
        initial_state = {
            "identity": identity,
            "texture": None,
            "filter": None,
            "poses": [],
            "surface": None,
            "renders": [],
            "error": None,
            "record": None,
        }
        final_state: Any = self.graph.invoke(initial_state)
        return final_state["record"]

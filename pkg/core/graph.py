"""
graph.py - LangGraph workflow for the constructive anchor search.

Architecture: START -> nondegenerate -> base_state -> perturbation -> END
Each node records a failure in the shared state instead of raising; the
conditional edges end the run at the first failed stage.
"""

import logging
from typing import Any, List, Optional, TypedDict

import numpy as np
from langgraph.graph import END, START, StateGraph

from .curve_model import Arc, Curve
from .errors import SearchError
from .generic_search import (
    NondegeneratePair,
    SearchResult,
    check_star_on_arcs,
    confirm_base_state,
    find_nondegenerate_pair,
    perturb_until_generic,
)
from .settings import Tolerances

logger = logging.getLogger(__name__)


class SearchFailure(TypedDict):
    stage: str
    message: str
    attempts: int
    diagnostic: Optional[str]


class SearchState(TypedDict):
    """State that flows through the search pipeline."""
    curve: Curve
    arcs: List[Arc]
    seed: int
    budget: int
    sample_budget: int
    tolerances: Tolerances
    star_satisfied: bool
    nondegenerate: Optional[NondegeneratePair]
    base_det: float
    result: Optional[SearchResult]
    failure: Optional[SearchFailure]
    current_stage: str


def _failure(error: SearchError) -> SearchFailure:
    return {
        "stage": error.stage,
        "message": error.message,
        "attempts": error.attempts,
        "diagnostic": error.diagnostic,
    }


def nondegenerate_node(state: SearchState) -> SearchState:
    """Stage 1: check (*) on the arcs and find a nondegenerate parameter pair."""
    logger.info("Search stage: nondegenerate pair")
    curve, (arc1, arc2) = state["curve"], state["arcs"]
    verdict = check_star_on_arcs(curve, [arc1, arc2], state["tolerances"])
    try:
        pair = find_nondegenerate_pair(
            curve, arc1, arc2,
            budget=state["sample_budget"],
            rng=np.random.default_rng(state["seed"]),
            tolerances=state["tolerances"],
        )
    except SearchError as e:
        logger.warning("Nondegenerate pair search failed: %s", e)
        return {
            **state,
            "star_satisfied": verdict.satisfied,
            "failure": _failure(e),
            "current_stage": "nondegenerate",
        }
    return {
        **state,
        "star_satisfied": verdict.satisfied,
        "nondegenerate": pair,
        "current_stage": "nondegenerate",
    }


def base_state_node(state: SearchState) -> SearchState:
    """Stage 2: confirm the chord map is a local diffeomorphism at (t1, t2, 0, 1)."""
    logger.info("Search stage: base state")
    pair = state["nondegenerate"]
    assert pair is not None
    try:
        det = confirm_base_state(state["curve"], pair, state["tolerances"])
    except SearchError as e:
        logger.warning("Base state rejected: %s", e)
        return {**state, "failure": _failure(e), "current_stage": "base_state"}
    return {**state, "base_det": det, "current_stage": "base_state"}


def perturbation_node(state: SearchState) -> SearchState:
    """Stage 3: perturb off the bad set, invert the chord map and certify."""
    logger.info("Search stage: perturbation (up to %d attempts)", state["budget"])
    pair = state["nondegenerate"]
    assert pair is not None
    arc1, arc2 = state["arcs"]
    try:
        result = perturb_until_generic(
            state["curve"], pair, arc1, arc2,
            seed=state["seed"],
            attempts=state["budget"],
            tolerances=state["tolerances"],
        )
    except SearchError as e:
        logger.warning("Perturbation failed: %s", e)
        return {**state, "failure": _failure(e), "current_stage": "perturbation"}
    result = result.model_copy(update={
        "base_det": state["base_det"],
        "star_satisfied": state["star_satisfied"],
    })
    return {**state, "result": result, "current_stage": "perturbation"}


def _continue_to(next_node: str):
    def route(state: SearchState) -> str:
        return END if state.get("failure") else next_node
    return route


def build_search_graph() -> Any:
    """
    Build the LangGraph StateGraph for the constructive search.

    Graph Structure:
        START -> nondegenerate -> base_state -> perturbation -> END
                       |              |
                       +--- END <-----+   (on failure)

    Returns:
        Compiled StateGraph ready to invoke
    """
    graph = StateGraph(SearchState)

    graph.add_node("nondegenerate", nondegenerate_node)
    graph.add_node("base_state", base_state_node)
    graph.add_node("perturbation", perturbation_node)

    graph.add_edge(START, "nondegenerate")
    graph.add_conditional_edges("nondegenerate", _continue_to("base_state"),
                                {"base_state": "base_state", END: END})
    graph.add_conditional_edges("base_state", _continue_to("perturbation"),
                                {"perturbation": "perturbation", END: END})
    graph.add_edge("perturbation", END)

    return graph.compile()


def run_search_pipeline(curve: Curve, arc1: Arc, arc2: Arc, seed: int, budget: int,
                        tolerances: Tolerances, sample_budget: int) -> SearchResult:
    """
    Run the search pipeline.

    Returns:
        The certified SearchResult

    Raises:
        SearchError: Rebuilt from the failure record of the stage that failed
    """
    graph = build_search_graph()

    initial_state: SearchState = {
        "curve": curve,
        "arcs": [arc1, arc2],
        "seed": seed,
        "budget": budget,
        "sample_budget": sample_budget,
        "tolerances": tolerances,
        "star_satisfied": False,
        "nondegenerate": None,
        "base_det": 0.0,
        "result": None,
        "failure": None,
        "current_stage": "start",
    }

    final_state = graph.invoke(initial_state)

    failure = final_state.get("failure")
    if failure:
        raise SearchError(failure["stage"], failure["message"],
                          attempts=failure["attempts"], diagnostic=failure["diagnostic"])
    result = final_state.get("result")
    if result is None:
        raise SearchError("perturbation", f"Pipeline ended at {final_state.get('current_stage')} without a result")
    return result

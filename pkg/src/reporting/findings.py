"""
This module turns a run report into a short list of prioritized findings for the console summary.
"""

from src.common.config import EPSILON_WARNING
from src.reporting.artifacts import RunReport

NORM_DRIFT_LIMIT = 1e-6
TRACE_DRIFT_LIMIT = 1e-6
ENTROPY_DRIFT_LIMIT = 1e-6
TAMO_RESIDUAL_LIMIT = 1e-6
DEVIATION_LIMIT = 5e-3


def _finding(recommendation: str, metric: str, priority: str) -> dict:
    return {"recommendation": recommendation, "metric": metric, "priority": priority}


def generate_run_findings(report: RunReport, epsilon: float = None, warnings=()) -> list:
    """
    Derives findings from the diagnostics of a run.

    Args:
        report (RunReport): The finished run report.
        epsilon (float, optional): Feedback strength of the scenario.
        warnings: Validation warnings recorded before the run.

    Returns:
        list: Dictionaries with a recommendation, the backing metric and a priority
        (HIGH, MEDIUM or INFO), HIGH first.
    """
    diagnostics = report.diagnostics
    findings = []

    # 1. Integrator fidelity
    norm_drift = diagnostics.get("norm_drift_max")
    if norm_drift is not None and norm_drift > NORM_DRIFT_LIMIT:
        findings.append(_finding(
            "TIGHTEN rtol/atol. THE EXACT STATE IS LOSING NORM.",
            f"Max norm drift {norm_drift:.3e} (limit {NORM_DRIFT_LIMIT:g}).",
            "HIGH",
        ))
    trace_drift = diagnostics.get("trace_drift_max")
    if trace_drift is not None and trace_drift > TRACE_DRIFT_LIMIT:
        findings.append(_finding(
            "REDUCE THE STEP. THE MIXED STATE TRACE IS DRIFTING.",
            f"Max trace drift {trace_drift:.3e} (limit {TRACE_DRIFT_LIMIT:g}).",
            "HIGH",
        ))
    residual = diagnostics.get("tamo_residual_max")
    if residual is not None and residual > TAMO_RESIDUAL_LIMIT:
        findings.append(_finding(
            "REDUCE THE STEP. THE TIME-AVERAGE IDENTITY IS NOT MET.",
            f"Max identity residual {residual:.3e} (limit {TAMO_RESIDUAL_LIMIT:g}).",
            "HIGH",
        ))
    deviation = diagnostics.get("sup_norm_deviation")
    if deviation is not None:
        if deviation > DEVIATION_LIMIT:
            findings.append(_finding(
                "LOWER EPSILON. THE REDUCED DYNAMICS DO NOT TRACK THE EXACT RUN.",
                f"Sup-norm population deviation {deviation:.3e} (limit {DEVIATION_LIMIT:g}).",
                "HIGH",
            ))
        else:
            findings.append(_finding(
                "REDUCTION CONFIRMED AGAINST THE EXACT RUN.",
                f"Sup-norm population deviation {deviation:.3e}.",
                "INFO",
            ))

    # 2. Regime of validity
    if epsilon is not None and epsilon > EPSILON_WARNING:
        findings.append(_finding(
            "LOWER EPSILON. THE RUN IS OUTSIDE THE ADIABATIC REGIME.",
            f"epsilon={epsilon:g} is above {EPSILON_WARNING:g}.",
            "MEDIUM",
        ))
    resonance = [w for w in warnings if "collide" in w]
    if resonance:
        findings.append(_finding(
            "CHECK THE SPECTRUM. LEVEL DIFFERENCES COLLIDE.",
            resonance[0],
            "MEDIUM",
        ))
    small_gap = [w for w in warnings if "adiabaticity" in w]
    if small_gap:
        findings.append(_finding(
            "WIDEN THE GAP OR LOWER EPSILON. THE ADIABATIC FRAME MAY NOT BE FOLLOWED.",
            small_gap[0],
            "MEDIUM",
        ))
    entropy_drift = diagnostics.get("entropy_drift_max")
    if entropy_drift is not None and entropy_drift > ENTROPY_DRIFT_LIMIT:
        findings.append(_finding(
            "REDUCE THE STEP. THE RELATIVE ENTROPY IS NOT CONSERVED.",
            f"Max entropy drift {entropy_drift:.3e}.",
            "MEDIUM",
        ))
    min_eigenvalue = diagnostics.get("min_eigenvalue")
    if min_eigenvalue is not None and min_eigenvalue < -1e-9:
        findings.append(_finding(
            "REDUCE THE STEP. THE MIXED STATE LEFT THE POSITIVE CONE.",
            f"Smallest eigenvalue {min_eigenvalue:.3e}.",
            "MEDIUM",
        ))

    # 3. Long-time behaviour
    classification = diagnostics.get("classification")
    if classification:
        limit = ", ".join(f"{x:.4f}" for x in classification["limit"])
        if classification["kind"] == "conservative":
            findings.append(_finding(
                "CONSERVATIVE GAME. POPULATIONS CYCLE AROUND THE INTERIOR FIXED POINT.",
                f"Fixed point ({limit}).",
                "INFO",
            ))
        else:
            extinct = ", ".join(str(k) for k in classification.get("extinct", []))
            findings.append(_finding(
                "EXTINCTION GAME. POPULATIONS RELAX TO A FACE OF THE SIMPLEX.",
                f"Limit ({limit}); extinct levels: {extinct or 'none'}.",
                "INFO",
            ))

    if not findings:
        findings.append(_finding("ALL DIAGNOSTICS WITHIN TOLERANCE.", "No drift above limits.", "INFO"))

    order = {"HIGH": 0, "MEDIUM": 1, "INFO": 2}
    return sorted(findings, key=lambda item: order[item["priority"]])

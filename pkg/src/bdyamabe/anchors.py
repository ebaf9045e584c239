"""Cross-reference keys attached to each report row.

Every check id maps to a short label naming the statement it audits.
The labels are opaque identifiers; :data:`KNOWN_ANCHORS` is the closed
set that report consumers may resolve against.
"""

ANCHORS = {
    "conformal_law": "classifLinear",
    "fermi_expansion": "exp:g",
    "bubble_residual": "eq:U",
    "horosphere_residual": "rmk:horo",
    "horosphere_printed_reading": "rmk:horo",
    "jacobi_residual": "linear:homog",
    "kernel_near_null": "classifLinear",
    "kernel_near_null_control": "classifLinear",
    "pullback": "form:U",
    "hyperboloid_isometry": "classifLinear",
    "coordinate_eigen": "eq:f",
    "coordinate_eigen_control": "eq:f",
    "ball_eigen": "eigen:loid",
    "ball_eigen_control": "lemma:eigen:loid",
    "ball_eigen_cosh": "eigen:loid",
    "correction_term": "Linearized",
    "refined_audit": "eq:ei",
    "pohozaev_identity": "eq:Pohozaev",
    "pohozaev_nonbinding": "eq:Pohozaev",
    "adm_mass": "def:mass",
    "mass_I": "propo:I:mass",
    "P_I_relation": "propo:I:mass",
    "sign_experiment": "cond:sinal",
    "green_mixed": "estim:simples",
    "green_expansion": "compactness:thm",
    "bubble_convergence": "form:bolha",
    "isolated_bound": "def:isolado",
    "simple_check": "def:simples",
    "simple_bounds": "estim:simples",
    "w_rescaling": "def:simples",
}

KNOWN_ANCHORS = frozenset(
    """main:equation:1 def:fermi exp:g eq:Uk eq:U form:U rmk:horo linear:homog
    classifLinear eq:f lemma:eigen:loid eigen:loid def:isolado def:simples estim:simples
    Linearized linear:8 estim:phi' hip:phi estim:blowup:compl eq:ei Pohozaev eq:Pohozaev
    cond:sinal def:asym def:mass propo:I:mass compactness:thm form:bolha def:blow-up""".split()
)


def anchor(check_id: str) -> str:
    return ANCHORS[check_id]

//! Serde types of the JSON model file.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A number, a `[re, im]` pair, or an expression over the parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Pair([f64; 2]),
    Text(String),
}

/// A scalar coefficient times the identity, or a sum of coefficients times
/// products of named matrices (`g1`, `Lambda_e5`, `Gamma`, `E`, …).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TermsSpec {
    Scalar(Scalar),
    Terms(Vec<(Scalar, Vec<String>)>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub parameters: BTreeMap<String, f64>,
    pub algebra: AlgebraSection,
    pub subalgebra: SubalgebraSection,
    pub bilinear_form: BilinearSection,
    #[serde(default)]
    pub matrix_rep: Option<MatrixRepSection>,
    pub chart: ChartSection,
    #[serde(default)]
    pub fields: Option<FieldsSection>,
    #[serde(default)]
    pub gammas: Option<GammasSection>,
    #[serde(default)]
    pub closed_forms: ClosedFormsSection,
    #[serde(default)]
    pub casimirs: Vec<CasimirSection>,
    #[serde(default)]
    pub polarization: Option<PolarizationSection>,
    #[serde(default)]
    pub lambda_rep: Option<LambdaRepSection>,
    #[serde(default)]
    pub identities: Vec<IdentitySection>,
    #[serde(default)]
    pub symmetry_polynomials: Vec<SymmetryPolySection>,
    #[serde(default)]
    pub solutions: Option<SolutionsSection>,
    #[serde(default)]
    pub verification: VerificationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgebraSection {
    pub labels: Vec<String>,
    /// `[A, B, C, coefficient]` meaning `[e_A, e_B] ∋ coefficient · e_C`.
    pub brackets: Vec<(String, String, String, Scalar)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SubalgebraSection {
    pub h: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BilinearSection {
    #[serde(default)]
    pub upper: Option<Vec<Vec<Scalar>>>,
    #[serde(default)]
    pub lower: Option<Vec<Vec<Scalar>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixRepSection {
    pub matrices: BTreeMap<String, Vec<Vec<Scalar>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChartSection {
    /// `[name, label]`, the first entry being the rightmost factor.
    pub coordinates: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct FieldsSection {
    #[serde(default)]
    pub xi: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    pub eta: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct GammasSection {
    /// Explicit `γ̂^a` in 𝔪 order; built from the form when absent.
    #[serde(default)]
    pub matrices: Option<Vec<Vec<Vec<Scalar>>>>,
    /// Parameter that must equal the computed pseudospin.
    #[serde(default)]
    pub pseudospin: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OpSpec {
    #[serde(default)]
    pub derivatives: BTreeMap<String, TermsSpec>,
    #[serde(default)]
    pub potential: Option<TermsSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixIdentity {
    pub id: String,
    pub anchor: String,
    pub lhs: TermsSpec,
    pub rhs: TermsSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormsSection {
    #[serde(default)]
    pub metric: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub spin_connection: Option<TermsSpec>,
    #[serde(default)]
    pub dirac: Option<OpSpec>,
    #[serde(default)]
    pub symmetry: BTreeMap<String, OpSpec>,
    #[serde(default)]
    pub matrix_identities: Vec<MatrixIdentity>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CasimirSection {
    pub name: String,
    #[serde(default)]
    pub anchor: String,
    pub terms: Vec<(Scalar, Vec<String>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolarizationSection {
    pub lambda: Vec<Scalar>,
    pub basis: Vec<Vec<Scalar>>,
    #[serde(default)]
    pub anchor: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpinorSpec {
    /// Components as expressions, after optional bindings.
    Expression {
        #[serde(default)]
        bindings: Vec<(String, String)>,
        components: Vec<String>,
    },
    /// `exp(Σ coef·M) · phase · ψ_ode(argument)`.
    OdeAssembly { ode: String, exponent: TermsSpec, phase: String, argument: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LambdaRepSection {
    pub vars: Vec<String>,
    /// Parameters of the orbit section `λ(j)`.
    pub section_params: Vec<String>,
    /// `λ(j)` as expressions.
    pub section: Vec<Scalar>,
    /// Scalar first-order operators `ℓ_A`.
    pub ops: BTreeMap<String, OpSpec>,
    /// Expected `κ_μ(j)` for `K_μ(−iħℓ)`.
    #[serde(default)]
    pub casimir_values: BTreeMap<String, String>,
    #[serde(default)]
    pub reduced_spinor: Option<SpinorSpec>,
    /// Mass in the reduced Dirac equation, as an expression.
    #[serde(default)]
    pub reduced_mass: Option<String>,
    /// Sampling box per λ-variable for the reduced spinor checks.
    #[serde(default)]
    pub reduced_box: Option<Vec<[f64; 2]>>,
    /// Density ρ(q) of the measure `dμ = ρ dq` when declared.
    #[serde(default)]
    pub measure: Option<String>,
    #[serde(default)]
    pub anchor: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum IdentityExpectation {
    Vanishes,
    Nonzero,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    pub name: String,
    #[serde(default)]
    pub anchor: String,
    pub terms: Vec<(Scalar, Vec<String>)>,
    pub expect: IdentityExpectation,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Relation {
    /// `[P, D_M] = 0`
    CommutesWithDirac,
    /// `P = factor · D_M`
    EqualsDirac { factor: Scalar },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SymmetryPolySection {
    pub id: String,
    #[serde(default)]
    pub anchor: String,
    /// Symmetrized words in the labels of `X̃_A`.
    pub terms: Vec<(Scalar, Vec<String>)>,
    pub relation: Relation,
    /// Parameter variants (e.g. both pseudospins) to run the check for.
    #[serde(default)]
    pub variants: Vec<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    pub var: String,
    /// `iħ ψ' = M(var) ψ`
    pub matrix: TermsSpec,
    pub start: f64,
    pub initial: Vec<Scalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// Label of the λ-operator generating `e^{−τℓ}`.
    pub generator: String,
    /// Name of the flow amount variable.
    pub amount: String,
    #[serde(default)]
    pub bindings: Vec<(String, String)>,
    pub prefactor: String,
    /// New `(q1, q2)`.
    pub args: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Draw {
    Uniform { uniform: [f64; 2] },
    Signed { signed: [f64; 2] },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Construction {
    OdeAssembly { ode: String, exponent: TermsSpec, phase: String, argument: String },
    /// Flows applied in order to the seed: `sequence[0]` is outermost.
    Flows { sequence: Vec<(String, String)>, seed: SpinorSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub id: String,
    /// Parameter overrides as expressions in the drawn parameters.
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
    /// Mass used in `(D_M − m')ψ` as an expression.
    #[serde(default)]
    pub mass: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub id: String,
    #[serde(default)]
    pub anchor: String,
    pub construction: Construction,
    /// Parameters drawn per family member.
    #[serde(default)]
    pub draws: BTreeMap<String, Draw>,
    /// Parameters fixed by expressions after drawing.
    #[serde(default)]
    pub pinned: BTreeMap<String, String>,
    #[serde(default)]
    pub variants: Vec<BTreeMap<String, f64>>,
    /// Mass in the Dirac equation, as an expression.
    pub mass: String,
    #[serde(default)]
    pub controls: Vec<ControlSection>,
    /// λ-variables whose operators act in the companion system
    /// `(X̃_A + ℓ_A)ψ = 0`.
    #[serde(default)]
    pub companion: Vec<String>,
    /// Tolerance of the companion-system residual.
    #[serde(default)]
    pub companion_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SolutionsSection {
    #[serde(default)]
    pub odes: BTreeMap<String, OdeSection>,
    #[serde(default)]
    pub flows: BTreeMap<String, FlowSection>,
    #[serde(default)]
    pub families: Vec<FamilySection>,
    /// Smooth test function of the λ-variables for the flow checks.
    #[serde(default)]
    pub flow_test_function: Option<String>,
    /// Parameter pins used by the flow checks.
    #[serde(default)]
    pub flow_pinned: BTreeMap<String, String>,
    #[serde(default)]
    pub flow_variants: Vec<BTreeMap<String, f64>>,
    /// Sampling box per λ-variable for the flow checks.
    #[serde(default)]
    pub flow_box: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Expected minimiser as an expression.
    pub expect: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub axes: Vec<GridAxis>,
    /// Mass used by the reduced Dirac residual.
    pub mass: String,
    #[serde(default)]
    pub variants: Vec<BTreeMap<String, f64>>,
}

fn default_points() -> usize {
    25
}
fn default_box() -> [f64; 2] {
    [-0.4, 0.4]
}
fn default_solution_box() -> [f64; 2] {
    [-0.3, 0.3]
}
fn default_jet_order() -> usize {
    4
}
fn default_ten() -> usize {
    10
}
fn default_five() -> usize {
    5
}
fn default_frame_points() -> usize {
    50
}
fn default_curvature_points() -> usize {
    100
}
fn default_solution_points() -> usize {
    30
}
fn default_degree() -> usize {
    2
}
fn default_flow_pairs() -> usize {
    20
}
fn default_lambda_box() -> [f64; 2] {
    [0.15, 0.6]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VerificationSection {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(rename = "box", default = "default_box")]
    pub sample_box: [f64; 2],
    #[serde(default = "default_solution_box")]
    pub solution_box: [f64; 2],
    #[serde(default = "default_jet_order")]
    pub jet_order: usize,
    #[serde(default = "default_degree")]
    pub test_degree: usize,
    /// Parameter draws for form-dependent checks.
    #[serde(default)]
    pub draws: BTreeMap<String, Draw>,
    #[serde(default = "default_ten")]
    pub adh_draws: usize,
    #[serde(default = "default_five")]
    pub curvature_draws: usize,
    #[serde(default = "default_curvature_points")]
    pub curvature_points: usize,
    #[serde(default = "default_frame_points")]
    pub frame_points: usize,
    #[serde(default = "default_solution_points")]
    pub solution_points: usize,
    #[serde(default = "default_five")]
    pub solution_draws: usize,
    #[serde(default = "default_ten")]
    pub lambda_draws: usize,
    #[serde(default = "default_flow_pairs")]
    pub flow_pairs: usize,
    /// Magnitude range of λ-variables (random signs).
    #[serde(default = "default_lambda_box")]
    pub lambda_box: [f64; 2],
    /// Draws of the orbit-section parameters.
    #[serde(default)]
    pub section_draws: BTreeMap<String, Draw>,
    #[serde(default)]
    pub expected_scalar_curvature: Option<String>,
    #[serde(default)]
    pub expected_index: Option<usize>,
    #[serde(default)]
    pub expected_orbit_dim: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub lambda_variants: Vec<BTreeMap<String, f64>>,
    /// Report anchors overriding the built-in table, by check id prefix.
    #[serde(default)]
    pub anchors: BTreeMap<String, String>,
}

impl Default for VerificationSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

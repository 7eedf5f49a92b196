use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::file::parse_scenario_toml;
use super::{Check, Expectations, Family, Reference, Scenario, ScenarioError, Source};
use crate::bracketops::{BilinearForm, PairingConvention};
use crate::fieldexpr::{parse_field_in, Chart, FieldExpr, GridBox, ParseContext};
use crate::perturber::staircase_counterexample;

pub const SCENARIO_NAMES: [&str; 8] = [
    "cubic_model",
    "polterovich",
    "incomplete_flow",
    "nonlocal_cutoff",
    "staircase",
    "torus_B",
    "quadratic_model",
    "quartic_model",
];

const CUBIC: &str = include_str!("../../scenarios/cubic_model.toml");
const QUADRATIC: &str = include_str!("../../scenarios/quadratic_model.toml");
const QUARTIC: &str = include_str!("../../scenarios/quartic_model.toml");

pub fn cubic_model() -> Result<Scenario, ScenarioError> {
    parse_scenario_toml(CUBIC)
}

pub fn quadratic_model() -> Result<Scenario, ScenarioError> {
    parse_scenario_toml(QUADRATIC)
}

pub fn quartic_model() -> Result<Scenario, ScenarioError> {
    parse_scenario_toml(QUARTIC)
}

fn parse(text: &str, chart: &Chart) -> Result<FieldExpr, ScenarioError> {
    Ok(parse_field_in(text, chart, &ParseContext::new())?)
}

/// A one-variable profile written in `t`, composed with `arg`.
fn profile_of(text: &str, arg: &FieldExpr) -> Result<FieldExpr, ScenarioError> {
    let chi = parse(text, &Chart::with_names(&["t"]))?;
    Ok(chi.substitute(std::slice::from_ref(arg)))
}

/// `F_n = χ(p) cos(nq)/√n`, `G_n = χ(p) sin(nq)/√n` for a profile `χ(t)`
/// (default: the unit bump, so `‖χ‖ = 1`).
pub fn polterovich(chi: Option<&str>) -> Result<Scenario, ScenarioError> {
    let chart = Chart::with_names(&["q", "p"]);
    let conv = PairingConvention::standard(2)?;
    let q = FieldExpr::var(0, 2);
    let p = FieldExpr::var(1, 2);
    let chi_text = chi.unwrap_or("bump(t)").to_string();
    let chi = profile_of(&chi_text, &p)?;
    let chi_prime = chi.diff(1)?;
    let family_chi = chi.clone();
    let family = Family::new("F_n = chi(p) cos(nq)/sqrt(n), G_n = chi(p) sin(nq)/sqrt(n)", move |n| {
        let nf = n as f64;
        let s = nf.sqrt();
        let nq = &q * nf;
        Ok((&family_chi * nq.cos() / s, &family_chi * nq.sin() / s))
    });
    let zero = FieldExpr::zero(2);
    let mut extras = BTreeMap::new();
    extras.insert("chi".to_string(), chi.clone());
    extras.insert("chi_chi_prime".to_string(), &chi * &chi_prime);
    let references = [1usize, 4, 16, 64]
        .iter()
        .map(|&n| {
            Reference::new(
                &format!("||B(F_{n},G_{n})| - |chi chi'||"),
                0.0,
                Source::Example,
                "the bracket is chi chi' up to sign for every n",
                Check::FamilyAbsDeviation(n, "chi_chi_prime".into(), None),
            )
        })
        .collect();
    Scenario {
        name: "polterovich".into(),
        summary: format!("oscillating pair with chi(t) = {chi_text}; the pair tends to 0 while the bracket stays"),
        chart,
        operator: BilinearForm::from_convention(&conv),
        conv: Some(conv),
        f: zero.clone(),
        g: zero,
        x: vec![0.0, 0.0],
        domain: GridBox::uniform(&[(0.0, 2.0 * PI), (-1.0, 1.0)], 257)?,
        expect: Expectations {
            complete_flow: Some(true),
            rigidity: None,
            locality: None,
        },
        references,
        family: Some(family),
        extras,
    }
    .verified()
}

fn four_chart() -> (Chart, PairingConvention, [FieldExpr; 4]) {
    (
        Chart::standard(4),
        PairingConvention::standard(4).expect("even"),
        [0, 1, 2, 3].map(|i| FieldExpr::var(i, 4)),
    )
}

const CHI_SQRT: &str = "sqrt(2*t + 2)";

/// `χ(z) cos(nu)/√n` and `χ(z) sin(nu)/√n` with `χ(t) = √(2t + 2)`.
fn oscillation(n: usize) -> Result<(FieldExpr, FieldExpr), ScenarioError> {
    let (_, _, [_, _, z, u]) = four_chart();
    let chi = profile_of(CHI_SQRT, &z)?;
    let nf = n as f64;
    let nu = &u * nf;
    Ok((&chi * nu.cos() / nf.sqrt(), &chi * nu.sin() / nf.sqrt()))
}

/// `M = {−1 < z < 1} ⊂ ℝ⁴`, `f = x`, `g = y` and
/// `f_n = x + χ(z) cos(nu)/√n`, `g_n = y − χ(z) sin(nu)/√n`.
pub fn incomplete_flow() -> Result<Scenario, ScenarioError> {
    let (chart, conv, [x, y, z, _]) = four_chart();
    let family = Family::new("f_n = x + chi(z) cos(nu)/sqrt(n), g_n = y - chi(z) sin(nu)/sqrt(n)", |n| {
        let (x, y) = (FieldExpr::var(0, 4), FieldExpr::var(1, 4));
        let (c, s) = oscillation(n)?;
        Ok((x + c, y - s))
    });
    let mut references = vec![Reference::new(
        "{f,g}",
        1.0,
        Source::Example,
        "{x,y} = 1",
        Check::BracketConstant(None),
    )];
    for n in [1, 2, 5] {
        references.push(Reference::new(
            &format!("{{f_{n},g_{n}}}"),
            0.0,
            Source::Example,
            "chi chi' = 1 cancels {x,y}",
            Check::FamilyConstant(n, None),
        ));
    }
    let mut extras = BTreeMap::new();
    extras.insert("chi".to_string(), profile_of(CHI_SQRT, &z)?);
    Scenario {
        name: "incomplete_flow".into(),
        summary: "f_n, g_n -> x, y uniformly on -1 < z < 1 with {f_n,g_n} = 0; the flow of g_n reaches z = -1 in finite time".into(),
        chart,
        operator: BilinearForm::from_convention(&conv),
        conv: Some(conv),
        f: x,
        g: y,
        x: vec![0.0, 0.0, 0.0, 0.0],
        domain: GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0), (-0.999, 0.999), (-PI, PI)], 9)?,
        expect: Expectations {
            complete_flow: Some(false),
            rigidity: Some(false),
            locality: None,
        },
        references,
        family: Some(family),
        extras,
    }
    .verified()
}

/// The incomplete-flow pair cut off by `φ = ψ(x)ψ(y)ψ(z)ψ(u)`, where `ψ = 1`
/// on `[−¼, ¼]` and `0` outside `[−⅓, ⅓]`.
pub fn nonlocal_cutoff() -> Result<Scenario, ScenarioError> {
    let (chart, conv, [x, y, z, u]) = four_chart();
    let cut = |c: &FieldExpr| c.plateau(0.25, 1.0 / 3.0);
    let phi = cut(&x) * cut(&y) * cut(&z) * cut(&u);
    let fam_phi = phi.clone();
    let family = Family::new("F_n = f_n phi, G_n = g_n phi", move |n| {
        let (x, y) = (FieldExpr::var(0, 4), FieldExpr::var(1, 4));
        let (c, s) = oscillation(n)?;
        Ok(((x + c) * &fam_phi, (y - s) * &fam_phi))
    });
    let inner = GridBox::uniform(&[(-0.24, 0.24); 4], 9)?;
    let mut references = vec![
        Reference::new(
            "max {F,G}",
            1.0,
            Source::Example,
            "{F,G} = phi^2 + phi (y phi_y + x phi_x) <= 1",
            Check::BracketMax(None),
        ),
        Reference::new(
            "{F,G} on K",
            1.0,
            Source::Example,
            "phi = 1 on K",
            Check::BracketConstant(Some(inner.clone())),
        ),
    ];
    for n in [1, 4] {
        references.push(Reference::new(
            &format!("{{F_{n},G_{n}}} on K"),
            0.0,
            Source::Example,
            "F_n = f_n, G_n = g_n on K",
            Check::FamilyConstant(n, Some(inner.clone())),
        ));
    }
    let mut extras = BTreeMap::new();
    extras.insert("phi".to_string(), phi.clone());
    Scenario {
        name: "nonlocal_cutoff".into(),
        summary: "compactly supported F, G with {F,G} = 1 on K while nearby F_n, G_n have zero bracket on K".into(),
        chart,
        operator: BilinearForm::from_convention(&conv),
        conv: Some(conv),
        f: &x * &phi,
        g: &y * &phi,
        x: vec![0.0; 4],
        domain: GridBox::uniform(&[(-0.4, 0.4); 4], 13)?,
        expect: Expectations {
            complete_flow: Some(true),
            rigidity: Some(true),
            locality: Some(false),
        },
        references,
        family: Some(family),
        extras,
    }
    .verified()
}

/// `B(u, v) = u_x v_x` with `h = x`; the family is the staircase pair.
pub fn staircase() -> Result<Scenario, ScenarioError> {
    let chart = Chart::standard(2);
    let op = BilinearForm::constant(&[vec![1.0, 0.0], vec![0.0, 0.0]])?;
    let h = FieldExpr::var(0, 2);
    let domain = GridBox::uniform(&[(-3.0, 3.0), (-3.0, 3.0)], 61)?;
    let (fam_op, fam_h, fam_dom) = (op.clone(), h.clone(), domain.clone());
    let family = Family::new("f_n = phi(n h)/n, g_n = phi(n h + 1)/n", move |n| {
        let s = staircase_counterexample(&fam_op, &fam_h, n, &fam_dom)?;
        Ok((s.f, s.g))
    });
    let mut references = vec![Reference::new(
        "B(h,h)",
        1.0,
        Source::Derived,
        "h_x h_x",
        Check::Bracket,
    )];
    for n in [5, 20] {
        references.push(Reference::new(
            &format!("B(f_{n},g_{n})"),
            0.0,
            Source::Example,
            "phi'(t) phi'(t+1) = 0",
            Check::FamilyConstant(n, None),
        ));
    }
    let mut extras = BTreeMap::new();
    extras.insert("h".to_string(), h.clone());
    Scenario {
        name: "staircase".into(),
        summary: "a non-antisymmetric first-order operator whose value B(h,h) = 1 is destroyed by uniformly small perturbations".into(),
        chart,
        operator: op,
        conv: None,
        f: h.clone(),
        g: h,
        x: vec![0.0, 0.0],
        domain,
        expect: Expectations {
            complete_flow: None,
            rigidity: Some(false),
            locality: None,
        },
        references,
        family: Some(family),
        extras,
    }
    .verified()
}

/// `B(f, g) = (sin²z + 1)(f_x g_y − f_y g_x)` on the 3-torus.
pub fn torus_b() -> Result<Scenario, ScenarioError> {
    let chart = Chart::standard(3);
    let z = FieldExpr::var(2, 3);
    let weight = z.sin().powi(2) + 1.0;
    let zero = FieldExpr::zero(3);
    let op = BilinearForm::new(vec![
        vec![zero.clone(), weight.clone(), zero.clone()],
        vec![-&weight, zero.clone(), zero.clone()],
        vec![zero.clone(), zero.clone(), zero],
    ])?;
    let references = vec![
        Reference::new(
            "B(sin x, sin y)(0,0,pi/2)",
            2.0,
            Source::Derived,
            "(sin^2 z + 1) cos x cos y",
            Check::Bracket,
        ),
        Reference::new("antisymmetric", 1.0, Source::Trivial, "", Check::Antisymmetric),
        Reference::new(
            "rank",
            2.0,
            Source::Derived,
            "the z-direction is in the kernel everywhere",
            Check::OperatorRank,
        ),
    ];
    let mut extras = BTreeMap::new();
    extras.insert("weight".to_string(), weight);
    Scenario {
        name: "torus_B".into(),
        summary: "a degenerate antisymmetric first-order operator on T^3 that rescales the bracket of each fibre z = const".into(),
        chart,
        operator: op,
        conv: None,
        f: FieldExpr::var(0, 3).sin(),
        g: FieldExpr::var(1, 3).sin(),
        x: vec![0.0, 0.0, PI / 2.0],
        domain: GridBox::uniform(&[(0.0, 2.0 * PI); 3], 21)?,
        expect: Expectations {
            complete_flow: None,
            rigidity: Some(true),
            locality: None,
        },
        references,
        family: None,
        extras,
    }
    .verified()
}

/// A built-in scenario by name.
pub fn scenario(name: &str) -> Result<Scenario, ScenarioError> {
    match name {
        "cubic_model" => cubic_model(),
        "polterovich" => polterovich(None),
        "incomplete_flow" => incomplete_flow(),
        "nonlocal_cutoff" => nonlocal_cutoff(),
        "staircase" => staircase(),
        "torus_B" => torus_b(),
        "quadratic_model" => quadratic_model(),
        "quartic_model" => quartic_model(),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

/// Every built-in scenario, each verified on load.
pub fn catalog() -> Result<Vec<Scenario>, ScenarioError> {
    SCENARIO_NAMES.iter().map(|n| scenario(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_loads_and_verifies() {
        let all = catalog().unwrap();
        assert!(all.len() >= 7);
        for s in &all {
            assert!(s.verify().unwrap().iter().all(|o| o.passed), "{}", s.name);
        }
        assert!(matches!(scenario("nope"), Err(ScenarioError::Unknown(_))));
    }

    #[test]
    fn polterovich_sign() {
        let s = polterovich(None).unwrap();
        let (f, g) = s.family.as_ref().unwrap().member(3).unwrap();
        let b = s.bracket(&f, &g).unwrap();
        let cc = s.extra("chi_chi_prime").unwrap();
        let p = [0.4, 0.3];
        assert!((b.eval(&p).unwrap() + cc.eval(&p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn bad_reference_is_rejected() {
        let text = CUBIC.replace("value = 4.0", "value = 5.0");
        assert!(matches!(
            parse_scenario_toml(&text),
            Err(ScenarioError::Verification { .. })
        ));
        let text = CUBIC.replace("kind = \"phi\"", "kind = \"psi\"");
        assert!(matches!(parse_scenario_toml(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn nonlocal_leibniz_decomposition() {
        let s = nonlocal_cutoff().unwrap();
        let phi = s.extra("phi").unwrap();
        let conv = s.conv.clone().unwrap();
        let (x, y) = (FieldExpr::var(0, 4), FieldExpr::var(1, 4));
        let pb = |a: &FieldExpr, b: &FieldExpr| crate::bracketops::poisson(a, b, &conv).unwrap();
        let rhs = phi * phi + phi * &y * pb(&x, phi) + phi * &x * pb(phi, &y);
        let diff = s.h().unwrap() - rhs;
        let grid = s.domain.with_resolution(9);
        assert!(crate::fieldexpr::sup_norm(&diff, &grid).unwrap().value < 1e-10);
    }
}

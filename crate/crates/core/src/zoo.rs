//! Named states and protocols. The catalog lives in a JSON manifest that
//! the CLI prints verbatim, so names, parameters and documented `M_I`
//! values have a single source.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelMap;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::markov::{self, MarkovComponents};
use crate::sample;
use crate::scenario::{self, OutRegister, Scenario, ScriptRun, Step};
use crate::state::{DensityState, Party, PureState, Register, RegisterLayout};

pub const MANIFEST_JSON: &str = include_str!("zoo_manifest.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooParam {
    pub name: String,
    pub default: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZooKind {
    State,
    Markov,
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub name: String,
    pub kind: ZooKind,
    pub description: String,
    pub params: Vec<ZooParam>,
    /// Either a number, a map from the first parameter's value to a
    /// number, or null for random families.
    pub m_i: serde_json::Value,
}

impl ZooEntry {
    /// Documented `M_I` for the given parameters, if any.
    pub fn documented_m_i(&self, params: &BTreeMap<String, String>) -> Option<f64> {
        match &self.m_i {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::Object(map) => {
                let p = self.params.first()?;
                let v = params.get(&p.name).unwrap_or(&p.default);
                map.get(v)?.as_f64()
            }
            _ => None,
        }
    }
}

pub fn manifest() -> &'static [ZooEntry] {
    static M: OnceLock<Vec<ZooEntry>> = OnceLock::new();
    M.get_or_init(|| serde_json::from_str(MANIFEST_JSON).expect("zoo manifest is valid JSON"))
}

pub fn entry(name: &str) -> Result<&'static ZooEntry> {
    manifest().iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownName(name.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZooItem {
    State { state: DensityState },
    Markov { components: MarkovComponents },
    Scenario { initial: DensityState, steps: Vec<Step> },
}

impl ZooItem {
    /// The state the item stands for: the state itself, the assembled
    /// Markov chain, or the output of the protocol.
    pub fn state(&self) -> Result<DensityState> {
        match self {
            ZooItem::State { state } => Ok(state.clone()),
            ZooItem::Markov { components } => markov::build_markov(components),
            ZooItem::Scenario { .. } => Ok(self.run()?.expect("scenario").scenario.state),
        }
    }

    pub fn run(&self) -> Result<Option<ScriptRun>> {
        match self {
            ZooItem::Scenario { initial, steps } => Ok(Some(scenario::run_script(&Scenario::new(initial.clone()), steps)?)),
            _ => Ok(None),
        }
    }
}

/// Splits `zoo:name?k=v&k2=v2` (the `zoo:` prefix is optional).
pub fn parse_ref(s: &str) -> Result<(String, BTreeMap<String, String>)> {
    let s = s.strip_prefix("zoo:").unwrap_or(s);
    let (name, query) = s.split_once('?').unwrap_or((s, ""));
    let mut params = BTreeMap::new();
    for kv in query.split('&').filter(|kv| !kv.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::BadParams(format!("`{kv}` is not key=value")))?;
        params.insert(k.to_string(), v.to_string());
    }
    Ok((name.to_string(), params))
}

/// Resolves a `zoo:` reference to a state; `seed` is used by the random
/// families unless the reference carries its own `seed=`.
pub fn resolve_ref(s: &str, seed: u64) -> Result<DensityState> {
    let (name, mut params) = parse_ref(s)?;
    let seed = match params.remove("seed") {
        Some(v) => v.parse().map_err(|_| Error::BadParams(format!("seed `{v}` is not an integer")))?,
        None => seed,
    };
    zoo(&name, &params, Some(seed))?.state()
}

struct Params<'a> {
    entry: &'a ZooEntry,
    given: &'a BTreeMap<String, String>,
}

impl Params<'_> {
    fn raw(&self, name: &str) -> &str {
        let p = self.entry.params.iter().find(|p| p.name == name).expect("parameter listed in the manifest");
        self.given.get(name).unwrap_or(&p.default)
    }

    fn dim(&self, name: &str) -> Result<usize> {
        let v = self.raw(name);
        match v.parse::<usize>() {
            Ok(d) if d > 0 => Ok(d),
            _ => Err(Error::BadParams(format!("{}: `{name}` must be a positive integer, got `{v}`", self.entry.name))),
        }
    }
}

/// Builds a catalog item. Deterministic in `(name, params, seed)`; the
/// seed defaults to 0.
pub fn zoo(name: &str, params: &BTreeMap<String, String>, seed: Option<u64>) -> Result<ZooItem> {
    let entry = entry(name)?;
    for k in params.keys() {
        if !entry.params.iter().any(|p| &p.name == k) {
            return Err(Error::BadParams(format!("{name} has no parameter `{k}`")));
        }
    }
    let p = Params { entry, given: params };
    let mut rng = sample::rng(seed.unwrap_or(0));
    let state = |state| Ok(ZooItem::State { state });
    match name {
        "ghz_diag" => state(ghz_diag()?),
        "bell_e0" => state(bell("A", "B")?.tensor(&e0("E")?)?),
        "classical_corr_e0" => state(classical_corr()?.tensor(&e0("E")?)?),
        "dummy" => state(
            DensityState::basis("A", p.dim("a")?, Party::Alice, 0)?
                .tensor(&DensityState::basis("B", p.dim("b")?, Party::Bob, 0)?)?
                .tensor(&DensityState::basis("E", p.dim("e")?, Party::Eve, 0)?)?,
        ),
        "markov_random" => Ok(ZooItem::Markov {
            components: markov::random_components(
                p.dim("entries")?,
                p.dim("a")?,
                p.dim("b")?,
                p.dim("el")?,
                p.dim("er")?,
                &mut rng,
            )?,
        }),
        "hs_random" => state(sample::density_hs_with(&abe_regs(&p)?, &mut rng)?),
        "pure_random" => state(sample::pure_with(&abe_regs(&p)?, &mut rng)?.to_density()),
        "sII_E_script" => non_free_example(p.raw("class")),
        "bell" => state(bell("A", "B")?),
        "classical_corr" => state(classical_corr()?),
        "product_ab" => state(DensityState::basis("A", 2, Party::Alice, 0)?.tensor(&DensityState::basis("B", 2, Party::Bob, 0)?)?),
        _ => Err(Error::UnknownName(name.to_string())),
    }
}

fn abe_regs(p: &Params) -> Result<[(&'static str, usize, Party); 3]> {
    Ok([("A", p.dim("a")?, Party::Alice), ("B", p.dim("b")?, Party::Bob), ("E", p.dim("e")?, Party::Eve)])
}

fn e0(label: &str) -> Result<DensityState> {
    DensityState::basis(label, 2, Party::Eve, 0)
}

fn bell(a: &str, b: &str) -> Result<DensityState> {
    Ok(PureState::bell((a, Party::Alice), (b, Party::Bob))?.to_density())
}

fn diag_state(regs: Vec<Register>, weights: &[(usize, f64)]) -> Result<DensityState> {
    let layout = RegisterLayout::new(regs)?;
    let n = layout.total_dim();
    let mut m = CMatrix::zeros(n, n);
    for &(i, w) in weights {
        m[(i, i)] = linalg::c(w, 0.0);
    }
    DensityState::new(layout, m)
}

fn ghz_diag() -> Result<DensityState> {
    diag_state(
        vec![Register::new("A", 2, Party::Alice), Register::new("B", 2, Party::Bob), Register::new("E", 2, Party::Eve)],
        &[(0, 0.5), (7, 0.5)],
    )
}

fn classical_corr() -> Result<DensityState> {
    diag_state(vec![Register::new("A", 2, Party::Alice), Register::new("B", 2, Party::Bob)], &[(0, 0.5), (3, 0.5)])
}

fn pauli_x() -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| if i != j { linalg::ONE } else { linalg::ZERO })
}

/// `|c,t> -> |c, t xor c>` on (target, control) ordered as given.
fn cnot_target_first() -> CMatrix {
    CMatrix::from_fn(4, 4, |i, j| {
        let (t, c) = (j / 2, j % 2);
        if i == (t ^ c) * 2 + c {
            linalg::ONE
        } else {
            linalg::ZERO
        }
    })
}

fn out(regs: &[(&str, usize)]) -> Vec<OutRegister> {
    regs.iter().map(|&(l, d)| OutRegister::new(l, d)).collect()
}

fn non_free_example(class: &str) -> Result<ZooItem> {
    let zeros = || -> Result<DensityState> {
        DensityState::basis("A", 2, Party::Alice, 0)?.tensor(&DensityState::basis("B", 2, Party::Bob, 0)?)?.tensor(&e0("E")?)
    };
    let (initial, steps) = match class {
        "le_minus_re" => {
            let mix = ChannelMap::random_unitary(&[(0.5, linalg::identity(2)), (0.5, pauli_x())])?;
            (ghz_diag()?, vec![Step::ReversibleE { on: vec!["E".into()], channel: mix, out: out(&[("E", 2)]), bypass: true }])
        }
        "q_e_to_a" | "q_e_to_b" => {
            let (me, other, party) =
                if class == "q_e_to_a" { ("A", "B", Party::Alice) } else { ("B", "A", Party::Bob) };
            let other_party = if party == Party::Alice { Party::Bob } else { Party::Alice };
            let local = format!("{me}'");
            let pair = PureState::bell((other, other_party), ("E'", Party::Eve))?.to_density();
            let initial = DensityState::basis(&local, 2, party, 0)?.tensor(&pair)?.tensor(&e0("E")?)?;
            let discard = if party == Party::Alice {
                Step::LocalA { on: vec![local], channel: None, out: vec![] }
            } else {
                Step::LocalB { on: vec![local], channel: None, out: vec![] }
            };
            (initial, vec![Step::QuantumFromE { label: "E'".into(), to: party }, discard])
        }
        "s_ab" => {
            let coin = DensityState::diagonal("C", Party::Alice, &[0.5, 0.5])?;
            let cnot = ChannelMap::unitary(cnot_target_first())?;
            let steps = vec![
                Step::LocalA { on: vec![], channel: Some(ChannelMap::prepare(&coin)), out: out(&[("C", 2)]) },
                Step::SecretAB { from: Party::Alice, on: vec![], measurement: None, message: "C".into(), copy: "CB".into() },
                Step::LocalA { on: vec!["A".into(), "C".into()], channel: Some(cnot.clone()), out: out(&[("A", 2), ("C", 2)]) },
                Step::LocalB { on: vec!["B".into(), "CB".into()], channel: Some(cnot), out: out(&[("B", 2), ("CB", 2)]) },
                Step::LocalA { on: vec!["C".into()], channel: None, out: vec![] },
                Step::LocalB { on: vec!["CB".into()], channel: None, out: vec![] },
            ];
            (zeros()?, steps)
        }
        "q_ab" => {
            let pair = PureState::bell(("A2", Party::Alice), ("Q", Party::Alice))?.to_density();
            let steps = vec![
                Step::LocalA { on: vec![], channel: Some(ChannelMap::prepare(&pair)), out: out(&[("A2", 2), ("Q", 2)]) },
                Step::QuantumAB { label: "Q".into(), to: Party::Bob },
                Step::LocalA { on: vec!["A".into()], channel: None, out: vec![] },
                Step::LocalB { on: vec!["B".into()], channel: None, out: vec![] },
            ];
            (zeros()?, steps)
        }
        other => return Err(Error::BadParams(format!("sII_E_script: unknown class `{other}`"))),
    };
    Ok(ZooItem::Scenario { initial, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::m_i_parties;
    use crate::scenario::OperationClass;

    fn no_params() -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    #[test]
    fn documented_values_match() {
        for e in manifest() {
            let mut cases = vec![no_params()];
            if let serde_json::Value::Object(map) = &e.m_i {
                cases = map.keys().map(|k| BTreeMap::from([(e.params[0].name.clone(), k.clone())])).collect();
            }
            for params in cases {
                let s = zoo(&e.name, &params, Some(5)).unwrap().state().unwrap();
                if let Some(v) = e.documented_m_i(&params) {
                    let got = m_i_parties(&s).unwrap();
                    assert!((got - v).abs() < 1e-9, "{} {params:?}: {got} vs {v}", e.name);
                }
            }
        }
    }

    #[test]
    fn example_protocols_are_not_free() {
        for class in ["le_minus_re", "q_e_to_a", "q_e_to_b", "s_ab", "q_ab"] {
            let item = zoo("sII_E_script", &BTreeMap::from([("class".into(), class.into())]), None).unwrap();
            let run = item.run().unwrap().unwrap();
            assert!(run.m_i_before.abs() < 1e-12, "{class}");
            let expected = if class.starts_with("q_e") { OperationClass::OmegaQ } else { OperationClass::NonFree };
            assert_eq!(run.class, expected, "{class}");
        }
    }

    #[test]
    fn refs_parse_and_are_deterministic() {
        let (name, params) = parse_ref("zoo:markov_random?entries=2&a=3").unwrap();
        assert_eq!(name, "markov_random");
        assert_eq!(params["a"], "3");
        let s1 = resolve_ref("zoo:hs_random?e=3&seed=9", 0).unwrap();
        let s2 = resolve_ref("zoo:hs_random?e=3", 9).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.layout().dims(), vec![2, 2, 3]);
    }

    #[test]
    fn markov_random_is_markov() {
        let item = zoo("markov_random", &BTreeMap::from([("entries".into(), "3".into())]), Some(11)).unwrap();
        let s = item.state().unwrap();
        assert!(crate::entropy::cqmi_partition(&s, &crate::entropy::Partition::from_parties(s.layout())).unwrap() < 1e-10);
    }

    #[test]
    fn errors() {
        assert!(matches!(zoo("nope", &no_params(), None), Err(Error::UnknownName(_))));
        let bad = BTreeMap::from([("a".into(), "0".into())]);
        assert!(matches!(zoo("dummy", &bad, None), Err(Error::BadParams(_))));
        let unknown = BTreeMap::from([("zz".into(), "1".into())]);
        assert!(matches!(zoo("ghz_diag", &unknown, None), Err(Error::BadParams(_))));
        assert!(matches!(parse_ref("zoo:dummy?a"), Err(Error::BadParams(_))));
    }
}

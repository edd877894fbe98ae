//! Text formats for models, m-graphs, datasets, learned tables, policies and
//! certificates. Every writer has a matching reader, and floats are written
//! in their shortest round-trip form so a written file parses back to the
//! same values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use missmdp_core::learn::LearnedMissingness;
use missmdp_core::model::{
    validate_model, FeatureSpace, Indicator, MissMdp, MissMdpBuilder, MissingnessTable, Observation,
};
use missmdp_core::pac::{CertifiedKey, PacCertificate};
use missmdp_core::plan::{AlphaPolicy, AlphaVector};
use missmdp_core::simulate::{Dataset, History};

use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Core(missmdp_core::Error::Parse { line, message: message.into() })
}

fn number<T: FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token.parse().map_err(|_| parse_err(line, format!("bad {what} {token:?}")))
}

/// Non-empty lines with comments stripped, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("").trim();
        (!content.is_empty()).then(|| (i + 1, content.split_whitespace().collect()))
    })
}

fn expect_arity(tokens: &[&str], n: usize, line: usize) -> Result<()> {
    if tokens.len() == n {
        Ok(())
    } else {
        Err(parse_err(line, format!("`{}` expects {} argument(s), got {}", tokens[0], n - 1, tokens.len() - 1)))
    }
}

/// A parsed model file; the `M` rows are optional.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: MissMdp,
    pub missingness: Option<MissingnessTable>,
}

/// Parses `features`, `actions`, `gamma`, `init`, `T`, `R`, `M` and
/// `terminal` declarations. When `M` rows are present the model is also
/// validated against them.
pub fn parse_model(text: &str) -> Result<ModelFile> {
    let mut domains: Option<Vec<u32>> = None;
    let mut actions: Option<usize> = None;
    let mut gamma: Option<f64> = None;
    let mut init = Vec::new();
    let mut trans = Vec::new();
    let mut rewards = Vec::new();
    let mut terminal = Vec::new();
    let mut rows: BTreeMap<usize, Vec<(Indicator, f64)>> = BTreeMap::new();
    let mut m_lines = Vec::new();
    for (line, tokens) in content_lines(text) {
        match tokens[0] {
            "features" => {
                if tokens.len() < 2 {
                    return Err(parse_err(line, "`features` needs at least one domain size"));
                }
                domains = Some(tokens[1..].iter().map(|t| number(t, line, "domain size")).collect::<Result<_>>()?);
            }
            "actions" => {
                expect_arity(&tokens, 2, line)?;
                actions = Some(number(tokens[1], line, "action count")?);
            }
            "gamma" => {
                expect_arity(&tokens, 2, line)?;
                gamma = Some(number(tokens[1], line, "discount")?);
            }
            "init" => {
                expect_arity(&tokens, 3, line)?;
                init.push((number::<usize>(tokens[1], line, "state")?, number::<f64>(tokens[2], line, "probability")?));
            }
            "T" => {
                expect_arity(&tokens, 5, line)?;
                trans.push((
                    number::<usize>(tokens[1], line, "state")?,
                    number::<usize>(tokens[2], line, "action")?,
                    number::<usize>(tokens[3], line, "state")?,
                    number::<f64>(tokens[4], line, "probability")?,
                ));
            }
            "R" => {
                expect_arity(&tokens, 4, line)?;
                rewards.push((
                    number::<usize>(tokens[1], line, "state")?,
                    number::<usize>(tokens[2], line, "action")?,
                    number::<f64>(tokens[3], line, "reward")?,
                ));
            }
            "M" => {
                expect_arity(&tokens, 4, line)?;
                m_lines.push((line, tokens[1].to_string(), tokens[2].to_string(), tokens[3].to_string()));
            }
            "terminal" => {
                expect_arity(&tokens, 2, line)?;
                terminal.push(number::<usize>(tokens[1], line, "state")?);
            }
            other => return Err(parse_err(line, format!("unknown declaration {other:?}"))),
        }
    }
    let domains = domains.ok_or_else(|| parse_err(0, "missing `features` declaration"))?;
    let actions = actions.ok_or_else(|| parse_err(0, "missing `actions` declaration"))?;
    let gamma = gamma.ok_or_else(|| parse_err(0, "missing `gamma` declaration"))?;
    let features = FeatureSpace::new(domains)?;
    for (line, s, bits, p) in m_lines {
        let s: usize = number(&s, line, "state")?;
        let r = Indicator::parse_bits(&bits, features.len()).map_err(|e| parse_err(line, e.to_string()))?;
        let p: f64 = number(&p, line, "probability")?;
        rows.entry(s).or_default().push((r, p));
    }
    let mut b = MissMdpBuilder::new(features.clone(), actions, gamma);
    for (s, p) in init {
        b.initial(s, p);
    }
    for (s, a, t, p) in trans {
        b.transition(s, a, t, p);
    }
    for (s, a, v) in rewards {
        b.reward(s, a, v);
    }
    for s in terminal {
        b.terminal(s);
    }
    let model = b.build()?;
    let missingness = if rows.is_empty() {
        validate_model(&model, &MissingnessTable::constant(&features, &[(features.full_indicator(), 1.0)]))
            .map_err(Error::validation)?;
        None
    } else {
        let table = table_from_rows(&features, rows)?;
        validate_model(&model, &table).map_err(Error::validation)?;
        Some(table)
    };
    Ok(ModelFile { model, missingness })
}

fn table_from_rows(features: &FeatureSpace, rows: BTreeMap<usize, Vec<(Indicator, f64)>>) -> Result<MissingnessTable> {
    let mut table = MissingnessTable::empty(features.len(), features.n_states());
    for (s, row) in rows {
        features.check_state(s)?;
        table.set_row(s, row);
    }
    Ok(table)
}

fn write_rows(out: &mut String, features: &FeatureSpace, table: &MissingnessTable) {
    for s in table.states() {
        for &(r, p) in table.row(s) {
            let _ = writeln!(out, "M {s} {} {p}", r.to_bit_string(features.len()));
        }
    }
}

/// Writes a model (and optionally its missingness table) in the format read
/// by [`parse_model`]. Zero rewards are omitted.
pub fn render_model(model: &MissMdp, missingness: Option<&MissingnessTable>) -> String {
    let features = model.features();
    let mut out = String::new();
    let domains: Vec<String> = features.domains().iter().map(u32::to_string).collect();
    let _ = writeln!(out, "features {}", domains.join(" "));
    let _ = writeln!(out, "actions {}", model.n_actions());
    let _ = writeln!(out, "gamma {}", model.gamma());
    for &(s, p) in model.initial() {
        let _ = writeln!(out, "init {s} {p}");
    }
    for s in model.terminal_states() {
        let _ = writeln!(out, "terminal {s}");
    }
    for s in 0..model.n_states() {
        for a in 0..model.n_actions() {
            for &(t, p) in model.transition(s, a) {
                let _ = writeln!(out, "T {s} {a} {t} {p}");
            }
        }
    }
    for s in 0..model.n_states() {
        for a in 0..model.n_actions() {
            let v = model.reward(s, a);
            if v != 0.0 {
                let _ = writeln!(out, "R {s} {a} {v}");
            }
        }
    }
    if let Some(table) = missingness {
        write_rows(&mut out, features, table);
    }
    out
}

/// A missingness table read from an `M`-row file, with the learner's
/// header fields when present.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessFile {
    pub table: MissingnessTable,
    pub algo: Option<String>,
    pub kappa: Option<f64>,
    pub dataset_size: Option<u64>,
}

/// Reads `M s bits p` rows plus `# algo=`, `# kappa=`, `# dataset_size=`
/// headers. Rows must sum to one.
pub fn parse_missingness(text: &str, features: &FeatureSpace) -> Result<MissingnessFile> {
    let mut algo = None;
    let mut kappa = None;
    let mut dataset_size = None;
    for (i, raw) in text.lines().enumerate() {
        let Some(header) = raw.trim().strip_prefix('#') else { continue };
        let Some((key, value)) = header.trim().split_once('=') else { continue };
        let value = value.trim();
        match key.trim() {
            "algo" => algo = Some(value.to_string()),
            "kappa" => kappa = Some(number(value, i + 1, "kappa")?),
            "dataset_size" => dataset_size = Some(number(value, i + 1, "dataset size")?),
            _ => {}
        }
    }
    let mut rows: BTreeMap<usize, Vec<(Indicator, f64)>> = BTreeMap::new();
    for (line, tokens) in content_lines(text) {
        if tokens[0] != "M" {
            return Err(parse_err(line, format!("expected an `M` row, found {:?}", tokens[0])));
        }
        expect_arity(&tokens, 4, line)?;
        let s: usize = number(tokens[1], line, "state")?;
        if s >= features.n_states() {
            return Err(parse_err(line, format!("state {s} out of range")));
        }
        let r = Indicator::parse_bits(tokens[2], features.len()).map_err(|e| parse_err(line, e.to_string()))?;
        let p: f64 = number(tokens[3], line, "probability")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(parse_err(line, format!("probability {p} not in [0, 1]")));
        }
        rows.entry(s).or_default().push((r, p));
    }
    for (&s, row) in &rows {
        let sum: f64 = row.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > missmdp_core::model::SUM_TOL * 1e3 {
            return Err(parse_err(0, format!("row of state {s} sums to {sum}")));
        }
    }
    Ok(MissingnessFile { table: table_from_rows(features, rows)?, algo, kappa, dataset_size })
}

pub fn render_missingness(features: &FeatureSpace, table: &MissingnessTable) -> String {
    let mut out = String::new();
    write_rows(&mut out, features, table);
    out
}

pub fn render_learned(features: &FeatureSpace, learned: &LearnedMissingness) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# algo={}", learned.algorithm.name());
    let _ = writeln!(out, "# kappa={}", learned.kappa);
    let _ = writeln!(out, "# dataset_size={}", learned.dataset_size);
    write_rows(&mut out, features, &learned.table);
    out
}

/// Comma-joined values with `_` for missing entries, e.g. `2,_,1`.
pub fn format_observation(features: &FeatureSpace, z: Observation) -> String {
    let parts: Vec<String> = features
        .observation_entries(z)
        .into_iter()
        .map(|v| v.map_or_else(|| "_".to_string(), |v| v.to_string()))
        .collect();
    parts.join(",")
}

pub fn parse_observation(features: &FeatureSpace, token: &str, line: usize) -> Result<Observation> {
    let entries: Vec<Option<u32>> = token
        .split(',')
        .map(|t| if t == "_" { Ok(None) } else { number(t, line, "feature value").map(Some) })
        .collect::<Result<_>>()?;
    features.observation(&entries).map_err(|e| parse_err(line, e.to_string()))
}

/// One history per line, alternating observations and actions, e.g.
/// `2,_ 0 1,3 2`.
pub fn render_dataset(features: &FeatureSpace, data: &Dataset) -> String {
    let mut out = String::new();
    for h in data.histories() {
        let mut tokens = Vec::with_capacity(h.observations.len() + h.actions.len());
        for (k, &z) in h.observations.iter().enumerate() {
            tokens.push(format_observation(features, z));
            if let Some(a) = h.actions.get(k) {
                tokens.push(a.to_string());
            }
        }
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
    out
}

/// Reads a dataset; a history whose last token is an observation is marked
/// terminal.
pub fn parse_dataset(features: &FeatureSpace, n_actions: usize, text: &str) -> Result<Dataset> {
    let mut data = Dataset::default();
    for (line, tokens) in content_lines(text) {
        let mut h = History::default();
        for (k, token) in tokens.iter().enumerate() {
            if k % 2 == 0 {
                h.observations.push(parse_observation(features, token, line)?);
            } else {
                let a: usize = number(token, line, "action")?;
                if a >= n_actions {
                    return Err(parse_err(line, format!("action {a} out of range")));
                }
                h.actions.push(a);
            }
        }
        h.terminal = tokens.len() % 2 == 1;
        data.push(h);
    }
    Ok(data)
}

/// Header `actions=k states=n gamma=g`, then `a v1 ... vn` per vector.
pub fn render_policy(policy: &AlphaPolicy, n_actions: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "actions={} states={} gamma={}", n_actions, policy.n_states(), policy.gamma);
    for v in &policy.vectors {
        let _ = write!(out, "{}", v.action);
        for x in &v.values {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out
}

/// A policy and its declared action count.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub policy: AlphaPolicy,
    pub n_actions: usize,
}

pub fn parse_policy(text: &str) -> Result<PolicyFile> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or_else(|| parse_err(0, "empty policy file"))?;
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for token in &header {
        let (k, v) = token.split_once('=').ok_or_else(|| parse_err(line, format!("bad header field {token:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| parse_err(line, format!("header lacks `{k}=`")));
    let n_actions: usize = number(get("actions")?, line, "action count")?;
    let n_states: usize = number(get("states")?, line, "state count")?;
    let gamma: f64 = number(get("gamma")?, line, "discount")?;
    let mut vectors = Vec::new();
    for (line, tokens) in lines {
        if tokens.len() != n_states + 1 {
            return Err(parse_err(line, format!("expected an action and {n_states} values")));
        }
        let action: usize = number(tokens[0], line, "action")?;
        if action >= n_actions {
            return Err(parse_err(line, format!("action {action} out of range")));
        }
        let values = tokens[1..].iter().map(|t| number(t, line, "value")).collect::<Result<Vec<f64>>>()?;
        vectors.push(AlphaVector { action, values });
    }
    Ok(PolicyFile { policy: AlphaPolicy::new(vectors, gamma)?, n_actions })
}

/// `[R<i>@]<observation>=<outcome>`: AIMI keys carry the feature and a
/// `missing`/`observed` outcome, the other learners an indicator bit string.
fn key_token(features: &FeatureSpace, key: &CertifiedKey) -> String {
    let obs = format_observation(features, key.key);
    match key.feature {
        Some(i) => format!("R{}@{obs}={}", i + 1, if key.outcome == 1 { "observed" } else { "missing" }),
        None => format!("{obs}={}", Indicator(key.outcome as u32).to_bit_string(features.len())),
    }
}

fn parse_key_token(features: &FeatureSpace, token: &str, line: usize) -> Result<(Option<usize>, Observation, usize)> {
    let (head, outcome) = token.rsplit_once('=').ok_or_else(|| parse_err(line, format!("bad key {token:?}")))?;
    let (feature, obs) = match head.split_once('@') {
        Some((r, obs)) => {
            let i: usize = number(r.trim_start_matches('R'), line, "feature")?;
            if i == 0 || i > features.len() {
                return Err(parse_err(line, format!("feature {i} out of range")));
            }
            (Some(i - 1), obs)
        }
        None => (None, head),
    };
    let z = parse_observation(features, obs, line)?;
    let outcome = match (feature, outcome) {
        (Some(_), "observed") => 1,
        (Some(_), "missing") => 0,
        (None, bits) => {
            Indicator::parse_bits(bits, features.len()).map_err(|e| parse_err(line, e.to_string()))?.bits() as usize
        }
        _ => return Err(parse_err(line, format!("bad outcome {outcome:?}"))),
    };
    Ok((feature, z, outcome))
}

/// Header `delta=`, `per_key_error=`, `global_epsilon=`, then
/// `key n epsilon flagged` rows.
pub fn render_certificate(features: &FeatureSpace, cert: &PacCertificate) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "delta={}", cert.delta);
    let _ = writeln!(out, "per_key_error={}", cert.per_key_error);
    let _ = writeln!(out, "global_epsilon={}", cert.global_epsilon);
    for k in &cert.keys {
        let _ = writeln!(out, "{} {} {} {}", key_token(features, k), k.n, k.epsilon, k.flagged);
    }
    out
}

pub fn parse_certificate(features: &FeatureSpace, text: &str) -> Result<PacCertificate> {
    let mut delta = None;
    let mut per_key_error = None;
    let mut global = None;
    let mut keys = Vec::new();
    for (line, tokens) in content_lines(text) {
        if tokens.len() == 1 {
            let (k, v) = tokens[0].split_once('=').ok_or_else(|| parse_err(line, "expected `key=value`"))?;
            let v: f64 = number(v, line, k)?;
            match k {
                "delta" => delta = Some(v),
                "per_key_error" => per_key_error = Some(v),
                "global_epsilon" => global = Some(v),
                _ => return Err(parse_err(line, format!("unknown header {k:?}"))),
            }
            continue;
        }
        expect_arity(&tokens, 4, line)?;
        let (feature, key, outcome) = parse_key_token(features, tokens[0], line)?;
        keys.push(CertifiedKey {
            feature,
            key,
            outcome,
            n: number(tokens[1], line, "count")?,
            epsilon: number(tokens[2], line, "epsilon")?,
            flagged: number(tokens[3], line, "flag")?,
        });
    }
    Ok(PacCertificate {
        delta: delta.ok_or_else(|| parse_err(0, "missing `delta=`"))?,
        per_key_error: per_key_error.ok_or_else(|| parse_err(0, "missing `per_key_error=`"))?,
        global_epsilon: global.ok_or_else(|| parse_err(0, "missing `global_epsilon=`"))?,
        keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "# two states\nfeatures 2\nactions 1\ngamma 0.9\ninit 0 1\nT 0 0 1 1\nT 1 0 0 1\nR 1 0 1.5\n\
                         M 0 1 0.5\nM 0 0 0.5\nM 1 1 1\n";

    #[test]
    fn model_round_trip() {
        let parsed = parse_model(SMALL).unwrap();
        let text = render_model(&parsed.model, parsed.missingness.as_ref());
        let again = parse_model(&text).unwrap();
        assert_eq!(render_model(&again.model, again.missingness.as_ref()), text);
        assert_eq!(again.model.reward(1, 0), 1.5);
        assert_eq!(again.missingness.unwrap().prob(0, Indicator(0)), 0.5);
    }

    #[test]
    fn model_errors_carry_line_numbers() {
        let bad = SMALL.replace("T 1 0 0 1", "T 1 zero 0 1");
        match parse_model(&bad) {
            Err(Error::Core(missmdp_core::Error::Parse { line, .. })) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_model("features 2\nactions 1\n").is_err());
        assert!(matches!(parse_model(&SMALL.replace("M 1 1 1", "M 1 1 0.5")), Err(Error::Validation(_))));
    }

    #[test]
    fn dataset_round_trip() {
        let fs = FeatureSpace::new(vec![3, 4]).unwrap();
        let data = parse_dataset(&fs, 3, "2,_ 0 1,3 2\n_,_ 1 0,0\n").unwrap();
        assert_eq!(data.histories().len(), 2);
        assert!(!data.histories()[0].terminal);
        assert!(data.histories()[1].terminal);
        assert_eq!(render_dataset(&fs, &data), "2,_ 0 1,3 2\n_,_ 1 0,0\n");
        assert!(parse_dataset(&fs, 3, "2,_ 5").is_err());
        assert!(parse_dataset(&fs, 3, "3,_ 0").is_err());
    }

    #[test]
    fn policy_round_trip() {
        let text = "actions=2 states=2 gamma=0.5\n0 1 0.25\n1 -3 2\n";
        let p = parse_policy(text).unwrap();
        assert_eq!(render_policy(&p.policy, p.n_actions), text);
        assert!(parse_policy("actions=2 states=2 gamma=0.5\n3 1 1\n").is_err());
    }
}

//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Unknown or duplicate keys are errors and every error carries the line it
//! refers to (0 when it concerns the file as a whole).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::galerkin::{InitialDensity, InitialVelocity, SimConfig};
use crate::rheology::ConvexPotential;

/// Floor used by the relative-energy monitor when none is configured.
pub const DEFAULT_EREL_FLOOR: f64 = 1e-8;

const KEYS: &[&str] = &[
    "kmax",
    "M",
    "dt",
    "T",
    "alpha",
    "gamma",
    "potential",
    "nu",
    "p",
    "tau0",
    "mu",
    "rho_min",
    "rho_max",
    "quad_m",
    "picard_tol",
    "picard_max",
    "u0",
    "u0_k",
    "u0_w",
    "u0_seed",
    "u0_scale",
    "u0_perturb",
    "rho0",
    "rho0_mean",
    "rho0_amp",
    "snapshot_every",
    "erel_floor",
];

/// A parsed configuration: the solver part plus harness-only settings and
/// the normalized key/value echo used in manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub erel_floor: f64,
    pub entries: Vec<(String, String)>,
}

impl RunConfig {
    /// Render back to the config syntax; parsing the result gives the same
    /// configuration.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(0, format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text)
}

struct Table {
    values: BTreeMap<String, (usize, String)>,
}

impl Table {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.values.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<(usize, String)> {
        self.take(key)
            .ok_or_else(|| Error::config(0, format!("missing required key `{key}`")))
    }

    fn num(&mut self, key: &str) -> Result<Option<(usize, f64)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(|x| Some((line, x)))
                .ok_or_else(|| {
                    Error::config(line, format!("`{key}` expects a finite number, got `{v}`"))
                }),
        }
    }

    fn req_num(&mut self, key: &str) -> Result<(usize, f64)> {
        match self.num(key)? {
            Some(v) => Ok(v),
            None => Err(Error::config(0, format!("missing required key `{key}`"))),
        }
    }

    fn uint(&mut self, key: &str) -> Result<Option<(usize, u64)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<u64>().map(|x| Some((line, x))).map_err(|_| {
                Error::config(
                    line,
                    format!("`{key}` expects a nonnegative integer, got `{v}`"),
                )
            }),
        }
    }

    fn reject(&mut self, key: &str, why: &str) -> Result<()> {
        match self.take(key) {
            Some((line, _)) => Err(Error::config(line, format!("`{key}` is not used {why}"))),
            None => Ok(()),
        }
    }
}

fn positive(key: &str, (line, v): (usize, f64)) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(
            line,
            format!("`{key}` must be positive, got {v}"),
        ))
    }
}

fn triple<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = v
        .split_whitespace()
        .map(|s| s.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config(line, format!("`{key}` expects three numbers, got `{v}`")))?;
    <[T; 3]>::try_from(parts)
        .map_err(|_| Error::config(line, format!("`{key}` expects three numbers, got `{v}`")))
}

pub fn parse_str(text: &str) -> Result<RunConfig> {
    let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            Error::config(line, format!("expected `key = value`, got `{content}`"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::config(line, format!("unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(Error::config(line, format!("`{key}` has an empty value")));
        }
        if let Some((first, _)) = values.get(key) {
            return Err(Error::config(
                line,
                format!("duplicate key `{key}` (lines {first} and {line})"),
            ));
        }
        values.insert(key.to_string(), (line, value.to_string()));
        order.push((key.to_string(), value.to_string()));
    }
    let mut t = Table { values };

    let (kl, kmax) = t
        .uint("kmax")?
        .ok_or_else(|| Error::config(0, "missing required key `kmax`"))?;
    if !(1..=7).contains(&kmax) {
        return Err(Error::config(
            kl,
            format!("`kmax` must be in 1..=7, got {kmax}"),
        ));
    }
    let kmax = kmax as u32;
    let (ml, m) = t
        .uint("M")?
        .ok_or_else(|| Error::config(0, "missing required key `M`"))?;
    if m < 2 {
        return Err(Error::config(ml, "`M` must be at least 2"));
    }
    let dt = positive("dt", t.req_num("dt")?)?;
    let (tl, t_final) = t.req_num("T")?;
    if t_final < 0.0 {
        return Err(Error::config(tl, "`T` must be nonnegative"));
    }
    let steps = t_final / dt;
    if (steps - steps.round()).abs() > 1e-6 {
        return Err(Error::config(
            tl,
            format!("`T` = {t_final} is not a multiple of dt = {dt}"),
        ));
    }
    let alpha = positive("alpha", t.req_num("alpha")?)?;
    let (gl, gamma) = t.req_num("gamma")?;
    if gamma <= 1.0 {
        return Err(Error::config(
            gl,
            format!("`gamma` must exceed 1, got {gamma}"),
        ));
    }
    let (pl, pname) = t.required("potential")?;
    let potential = match pname.as_str() {
        "power_law" => {
            let nu = positive("nu", t.req_num("nu")?)?;
            let (ll, p) = t.req_num("p")?;
            t.reject("tau0", "by power_law")?;
            t.reject("mu", "by power_law")?;
            ConvexPotential::power_law(nu, p).map_err(|e| Error::config(ll, e.to_string()))?
        }
        "newtonian" => {
            let nu = positive("nu", t.req_num("nu")?)?;
            t.reject("p", "by newtonian")?;
            t.reject("tau0", "by newtonian")?;
            t.reject("mu", "by newtonian")?;
            ConvexPotential::newtonian(nu).map_err(|e| Error::config(pl, e.to_string()))?
        }
        "bingham" => {
            let (ll, tau0) = t.req_num("tau0")?;
            if tau0 < 0.0 {
                return Err(Error::config(ll, "`tau0` must be nonnegative"));
            }
            let mu = positive("mu", t.req_num("mu")?)?;
            t.reject("nu", "by bingham")?;
            t.reject("p", "by bingham")?;
            ConvexPotential::bingham(tau0, mu).map_err(|e| Error::config(ll, e.to_string()))?
        }
        other => {
            return Err(Error::config(
                pl,
                format!("unknown potential `{other}` (expected power_law, bingham or newtonian)"),
            ))
        }
    };
    let rho_min = positive("rho_min", t.req_num("rho_min")?)?;
    let (rl, rho_max) = t.req_num("rho_max")?;
    if rho_max < rho_min {
        return Err(Error::config(rl, "`rho_max` is below `rho_min`"));
    }

    let quad_m = match t.uint("quad_m")? {
        None => SimConfig::default_quad_m(kmax),
        Some((l, q)) => {
            let need = 6 * kmax as u64;
            if q <= need {
                return Err(Error::config(
                    l,
                    format!("`quad_m` must exceed {need} for exact triple products"),
                ));
            }
            q as usize
        }
    };
    let picard_tol = match t.num("picard_tol")? {
        None => 1e-10,
        Some(v) => positive("picard_tol", v)?,
    };
    let picard_max = match t.uint("picard_max")? {
        None => 50,
        Some((l, 0)) => return Err(Error::config(l, "`picard_max` must be positive")),
        Some((_, v)) => v as usize,
    };

    let u0_name = t.take("u0");
    let u0 = match u0_name.as_ref().map(|(l, v)| (*l, v.as_str())) {
        None | Some((_, "zero")) => {
            for key in ["u0_k", "u0_w", "u0_seed", "u0_scale"] {
                t.reject(key, "when u0 = zero")?;
            }
            InitialVelocity::Zero
        }
        Some((_, "mode")) => {
            t.reject("u0_seed", "when u0 = mode")?;
            t.reject("u0_scale", "when u0 = mode")?;
            let (kl, kv) = t.required("u0_k")?;
            let k: [i32; 3] = triple("u0_k", kl, &kv)?;
            let (wl, wv) = t.required("u0_w")?;
            let w: [f64; 3] = triple("u0_w", wl, &wv)?;
            if k == [0, 0, 0] || k.iter().any(|c| c.unsigned_abs() > kmax) {
                return Err(Error::config(
                    kl,
                    format!(
                        "`u0_k` must be a nonzero wavevector with components within kmax = {kmax}"
                    ),
                ));
            }
            let kw: f64 = (0..3).map(|i| k[i] as f64 * w[i]).sum();
            if kw.abs() > 1e-12 || w.iter().any(|c| !c.is_finite()) {
                return Err(Error::config(
                    wl,
                    "`u0_w` must be finite and orthogonal to `u0_k`",
                ));
            }
            InitialVelocity::Mode { k, w }
        }
        Some((_, "random")) => {
            t.reject("u0_k", "when u0 = random")?;
            t.reject("u0_w", "when u0 = random")?;
            let seed = t.uint("u0_seed")?.map_or(42, |v| v.1);
            let scale = match t.num("u0_scale")? {
                None => 0.1,
                Some((_, s)) if s >= 0.0 => s,
                Some((l, _)) => return Err(Error::config(l, "`u0_scale` must be nonnegative")),
            };
            InitialVelocity::Random { seed, scale }
        }
        Some((l, other)) => {
            return Err(Error::config(
                l,
                format!("unknown u0 `{other}` (expected zero, mode or random)"),
            ))
        }
    };
    let u0_perturb = t.num("u0_perturb")?.map_or(0.0, |v| v.1);

    let rho0 = match t.take("rho0") {
        None => InitialDensity::Uniform(t.num("rho0_mean")?.map_or(1.0, |v| v.1)),
        Some((_, v)) if v == "uniform" => {
            t.reject("rho0_amp", "when rho0 = uniform")?;
            InitialDensity::Uniform(t.num("rho0_mean")?.map_or(1.0, |v| v.1))
        }
        Some((_, v)) if v == "wave" => InitialDensity::Wave {
            mean: t.num("rho0_mean")?.map_or(1.0, |v| v.1),
            amp: t.num("rho0_amp")?.map_or(0.0, |v| v.1),
        },
        Some((l, other)) => {
            return Err(Error::config(
                l,
                format!("unknown rho0 `{other}` (expected uniform or wave)"),
            ))
        }
    };
    t.reject("rho0_amp", "when rho0 = uniform")?;
    let snapshot_every = t.uint("snapshot_every")?.map_or(0, |v| v.1 as usize);
    let erel_floor = match t.num("erel_floor")? {
        None => DEFAULT_EREL_FLOOR,
        Some(v) => positive("erel_floor", v)?,
    };
    debug_assert!(t.values.is_empty(), "unconsumed keys {:?}", t.values.keys());

    let sim = SimConfig {
        kmax,
        density_m: m as usize,
        quad_m,
        dt,
        t_final,
        alpha,
        gamma,
        potential,
        rho_min,
        rho_max,
        picard_tol,
        picard_max,
        u0,
        u0_perturb,
        rho0,
        snapshot_every,
    };
    sim.validate()
        .map_err(|e| Error::config(0, e.to_string()))?;
    Ok(RunConfig {
        sim,
        erel_floor,
        entries: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "kmax = 1\nM = 16\ndt = 1e-3\nT = 0.1\nalpha = 1e-4\ngamma = 2\n\
                           potential = power_law\nnu = 1\np = 2\nrho_min = 0.5\nrho_max = 2\n";

    fn line_of(e: Error) -> usize {
        match e {
            Error::Config { line, .. } => line,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn minimal_file_parses_with_defaults() {
        let c = parse_str(MINIMAL).unwrap();
        assert_eq!(c.sim.kmax, 1);
        assert_eq!(c.sim.density_m, 16);
        assert_eq!(c.sim.num_steps(), 100);
        assert_eq!(
            c.sim.potential,
            ConvexPotential::power_law(1.0, 2.0).unwrap()
        );
        assert_eq!(c.sim.u0, InitialVelocity::Zero);
        assert_eq!(c.sim.rho0, InitialDensity::Uniform(1.0));
        assert_eq!(c.sim.picard_max, 50);
        assert_eq!(c.erel_floor, DEFAULT_EREL_FLOOR);
    }

    #[test]
    fn gamma_one_is_rejected() {
        let text = MINIMAL.replace("gamma = 2", "gamma = 1.0");
        assert_eq!(line_of(parse_str(&text).unwrap_err()), 6);
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let text = format!("{MINIMAL}dt = 2e-3\n");
        let e = parse_str(&text).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("lines 3 and 12"), "{msg}");
    }

    #[test]
    fn unknown_key_and_bad_values() {
        assert_eq!(
            line_of(parse_str(&format!("{MINIMAL}colour = red\n")).unwrap_err()),
            12
        );
        assert_eq!(
            line_of(parse_str(&MINIMAL.replace("dt = 1e-3", "dt = fast")).unwrap_err()),
            3
        );
        assert_eq!(
            line_of(parse_str(&MINIMAL.replace("kmax = 1", "kmax = 9")).unwrap_err()),
            1
        );
        assert!(parse_str(&MINIMAL.replace("rho_max = 2\n", "")).is_err());
        assert!(parse_str(&format!("{MINIMAL}tau0 = 1\n")).is_err());
        assert!(parse_str("kmax 1\n").is_err());
    }

    #[test]
    fn comments_and_mode_initial_data() {
        let text = format!(
            "# decay\n{}u0 = mode   # single mode\nu0_k = 1 0 0\nu0_w = 0 1 0\n",
            MINIMAL.replace(
                "potential = power_law\nnu = 1\np = 2",
                "potential = newtonian\nnu = 0.1"
            )
        );
        let c = parse_str(&text).unwrap();
        assert_eq!(c.sim.potential, ConvexPotential::newtonian(0.1).unwrap());
        assert_eq!(
            c.sim.u0,
            InitialVelocity::Mode {
                k: [1, 0, 0],
                w: [0.0, 1.0, 0.0]
            }
        );
        let bad = text.replace("u0_w = 0 1 0", "u0_w = 1 0 0");
        assert!(parse_str(&bad).is_err());
    }

    #[test]
    fn echo_roundtrips() {
        let c = parse_str(&format!("{MINIMAL}rho0 = wave\nrho0_amp = 0.3\n")).unwrap();
        let again = parse_str(&c.to_text()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn missing_file_is_config_error() {
        let e = parse_config(Path::new("/nonexistent/rheoflow.conf")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}

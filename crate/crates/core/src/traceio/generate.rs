//! Synthetic traces: Poisson arrivals from a fixed user population, with
//! each request's application drawn from an interactive/compute mix.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{TraceError, TraceFile, TraceHeader};
use crate::model::{CostProfile, Duration, ObjectRef, Task, TimePoint};

const DEFAULT_CATALOG: &str = include_str!("../../config/apps.toml");
const KB: f64 = 1024.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppClass {
    /// Heavy transfers, moderate compute.
    Interactive,
    /// Light transfers, heavy compute.
    Compute,
}

/// Base profile of one application; times in seconds, sizes in KB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub name: String,
    pub class: AppClass,
    pub r_mobile: f64,
    pub r_edge: f64,
    pub r_cloud: f64,
    pub up_edge: f64,
    pub down_edge: f64,
    pub up_cloud: f64,
    pub down_cloud: f64,
    pub download_kb: f64,
    pub object_kb: Vec<f64>,
    pub referred: usize,
    pub change_fraction: f64,
}

impl AppSpec {
    /// Cost profile with running times scaled by `size` and transfer
    /// times and byte counts by `net`.
    pub fn profile(&self, size: f64, net: f64) -> CostProfile {
        CostProfile {
            r_mobile: secs(self.r_mobile * size),
            r_edge: secs(self.r_edge * size),
            r_cloud: secs(self.r_cloud * size),
            up_edge: secs(self.up_edge * net),
            down_edge: secs(self.down_edge * net),
            up_cloud: secs(self.up_cloud * net),
            down_cloud: secs(self.down_cloud * net),
            upload_bytes: self.object_kb.iter().map(|kb| (kb * KB * net).round() as u64).sum(),
            download_bytes: (self.download_kb * KB * net).round() as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppCatalog {
    pub size_range: [f64; 2],
    pub net_range: [f64; 2],
    pub users: usize,
    #[serde(rename = "app")]
    pub apps: Vec<AppSpec>,
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), TraceError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1]) {
        return Err(TraceError::Config(format!("{name} must be 0 < lo <= hi, got {r:?}")));
    }
    Ok(())
}

impl AppCatalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> AppCatalog {
        AppCatalog::from_toml(DEFAULT_CATALOG).expect("built-in catalog is valid")
    }

    pub fn from_toml(text: &str) -> Result<AppCatalog, TraceError> {
        let catalog: AppCatalog = toml::from_str(text).map_err(|e| TraceError::Config(e.to_string()))?;
        catalog.check()?;
        Ok(catalog)
    }

    fn check(&self) -> Result<(), TraceError> {
        check_range("size_range", self.size_range)?;
        check_range("net_range", self.net_range)?;
        if self.users == 0 {
            return Err(TraceError::Config("users must be positive".into()));
        }
        for a in &self.apps {
            let bad = |m: &str| Err(TraceError::Config(format!("app `{}`: {m}", a.name)));
            let times = [a.r_mobile, a.r_edge, a.r_cloud, a.up_edge, a.down_edge, a.up_cloud, a.down_cloud];
            if times.iter().chain(&a.object_kb).chain([&a.download_kb]).any(|v| !v.is_finite() || *v < 0.0) {
                return bad("times and sizes must be finite and non-negative");
            }
            if !(a.r_cloud <= a.r_edge && a.r_edge < a.r_mobile) {
                return bad("running times must satisfy cloud <= edge < device");
            }
            if !(a.up_edge < a.up_cloud && a.down_edge <= a.down_cloud) {
                return bad("edge transfers must be faster than cloud transfers");
            }
            if a.object_kb.is_empty() || a.referred == 0 || a.referred > a.object_kb.len() {
                return bad("needs at least one object and 1..=len referred objects");
            }
            if !(0.0..=1.0).contains(&a.change_fraction) {
                return bad("change_fraction must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn app(&self, name: &str) -> Option<&AppSpec> {
        self.apps.iter().find(|a| a.name == name)
    }
}

/// Share of interactive requests plus relative app weights inside each class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub interactive_fraction: f64,
    pub interactive_weights: Vec<(String, f64)>,
    pub compute_weights: Vec<(String, f64)>,
}

impl MixSpec {
    /// Uniform weights over every app of each class in `catalog`.
    pub fn uniform(interactive_fraction: f64, catalog: &AppCatalog) -> MixSpec {
        let names = |class| {
            catalog.apps.iter().filter(|a| a.class == class).map(|a| (a.name.clone(), 1.0)).collect::<Vec<_>>()
        };
        MixSpec {
            interactive_fraction,
            interactive_weights: names(AppClass::Interactive),
            compute_weights: names(AppClass::Compute),
        }
    }

    /// Preset mixes: 1 = 80% interactive, 2 = 20% interactive, 3 = even.
    pub fn preset(id: u8, catalog: &AppCatalog) -> Result<MixSpec, TraceError> {
        let fraction = match id {
            1 => 0.8,
            2 => 0.2,
            3 => 0.5,
            _ => return Err(TraceError::Config(format!("unknown mix preset {id} (expected 1, 2 or 3)"))),
        };
        Ok(MixSpec::uniform(fraction, catalog))
    }

    fn check(&self, catalog: &AppCatalog) -> Result<(), TraceError> {
        let f = self.interactive_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(TraceError::Config(format!("interactive fraction {f} outside [0, 1]")));
        }
        let classes = [(AppClass::Interactive, &self.interactive_weights, f), (AppClass::Compute, &self.compute_weights, 1.0 - f)];
        for (class, weights, share) in classes {
            for (name, w) in weights.iter() {
                if !w.is_finite() || *w < 0.0 {
                    return Err(TraceError::Config(format!("weight of `{name}` must be finite and non-negative")));
                }
                match catalog.app(name) {
                    Some(a) if a.class == class => {}
                    Some(_) => return Err(TraceError::Config(format!("app `{name}` listed under the wrong class"))),
                    None => return Err(TraceError::Config(format!("unknown app `{name}`"))),
                }
            }
            if share > 0.0 && weights.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
                return Err(TraceError::Config(format!("{class:?} share is positive but its weights sum to zero")));
            }
        }
        Ok(())
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, weights: &'a [(String, f64)]) -> &'a str {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut x = rng.random_range(0.0..total);
    for (name, w) in weights {
        if x < *w {
            return name;
        }
        x -= w;
    }
    &weights.iter().rev().find(|(_, w)| *w > 0.0).expect("positive weight").0
}

fn secs(v: f64) -> Duration {
    Duration::from_secs_f64(v).expect("catalog times are checked")
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Generates `n` requests with i.i.d. Exponential(`lambda`) inter-arrival
/// times. Output depends only on the arguments.
pub fn generate(n: usize, lambda: f64, mix: &MixSpec, seed: u64, catalog: &AppCatalog) -> Result<TraceFile, TraceError> {
    if n == 0 {
        return Err(TraceError::Config("n must be positive".into()));
    }
    let gaps = Exp::new(lambda)
        .ok()
        .filter(|_| lambda.is_finite() && lambda > 0.0)
        .ok_or_else(|| TraceError::Config(format!("lambda must be positive and finite, got {lambda}")))?;
    catalog.check()?;
    mix.check(catalog)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net: Vec<f64> = (0..catalog.users).map(|_| draw(&mut rng, catalog.net_range)).collect();
    let mut versions: HashMap<(usize, &str), u64> = HashMap::new();
    let mut clock = 0.0_f64;
    let mut tasks = Vec::with_capacity(n);
    for i in 0..n {
        clock += gaps.sample(&mut rng);
        let user = rng.random_range(0..catalog.users);
        let interactive = rng.random_bool(mix.interactive_fraction);
        let weights = if interactive { &mix.interactive_weights } else { &mix.compute_weights };
        let app = catalog.app(pick(&mut rng, weights)).expect("mix apps are checked");
        let size = match app.class {
            AppClass::Compute => draw(&mut rng, catalog.size_range),
            AppClass::Interactive => 1.0,
        };
        let net = net[user];

        let version = versions.entry((user, app.name.as_str())).or_insert(0);
        *version += 1;
        let objects: Vec<ObjectRef> = app
            .object_kb
            .iter()
            .enumerate()
            .map(|(k, kb)| {
                let bytes = (kb * KB * net).round() as u64;
                let input = k == 0;
                ObjectRef {
                    id: format!("u{user:03}/{}/{k}", app.name),
                    bytes,
                    referred: k < app.referred,
                    version: if input { *version } else { 1 },
                    changed_bytes: if input { (bytes as f64 * app.change_fraction).round() as u64 } else { 0 },
                }
            })
            .collect();
        let profile = CostProfile { upload_bytes: objects.iter().map(|o| o.bytes).sum(), ..app.profile(size, net) };
        let mut task = Task::new(format!("t{i:06}"), TimePoint::from_secs_f64(clock).expect("finite clock"), profile);
        task.user_id = format!("u{user:03}");
        task.app = app.name.clone();
        task.objects = objects;
        tasks.push(task);
    }
    let generator = serde_json::json!({
        "n": n,
        "lambda": lambda,
        "seed": seed,
        "mix": mix,
    });
    Ok(TraceFile { header: Some(TraceHeader { generator: Some(generator), ..Default::default() }), tasks })
}

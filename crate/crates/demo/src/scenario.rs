//! Scenario assembly and the builder registry.

use std::sync::Arc;

use fieldgate_core::policy::{Engine, Policy, PolicyRegistry, UserContext};
use fieldgate_core::store::{Database, StoreError};
use fieldgate_core::value::Value;

use crate::endpoint::Endpoint;
use crate::{policies, seed};

/// Resolve a caller identity the way the service does: the id is looked up in
/// the dataset's `User` table (the demo's stand-in for session data) and the
/// row's columns become caller attributes. Ids without a directory row — and
/// any id when the dataset has no directory — fall back to anonymous.
pub fn user_context(db: &Database, id: Option<i64>) -> Result<UserContext, StoreError> {
    let Some(id) = id else {
        return Ok(UserContext::anonymous());
    };
    if db.catalog().table("User").is_none() {
        return Ok(UserContext::anonymous());
    }
    let Some(row) = db.lookup("User", &Value::Int(id))? else {
        return Ok(UserContext::anonymous());
    };
    let mut ctx = UserContext::authenticated(id);
    for (name, value) in row {
        if name != "id" {
            ctx = ctx.with_attr(name, value);
        }
    }
    Ok(ctx)
}

/// A named, rebuildable policy. Scenarios keep their specs around so tests
/// can reconstruct engines with individual policies dropped or probed.
pub struct PolicySpec {
    name: &'static str,
    make: Box<dyn Fn() -> Policy + Send + Sync>,
}

impl PolicySpec {
    pub fn new(name: &'static str, make: impl Fn() -> Policy + Send + Sync + 'static) -> PolicySpec {
        PolicySpec {
            name,
            make: Box::new(make),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn build(&self) -> Policy {
        (self.make)()
    }
}

/// Options for [`build_engine`], used by tests that perturb the policy set.
#[derive(Default)]
pub struct EngineOptions {
    /// Leave out the policy with this name.
    pub drop_policy: Option<String>,
    /// Invoke with each policy's name every time its body runs.
    pub probe: Option<Arc<dyn Fn(&str) + Send + Sync>>,
    /// Enable post-phase scope checking.
    pub scope_checks: bool,
}

pub fn build_engine(
    db: Arc<Database>,
    specs: &[PolicySpec],
    options: EngineOptions,
) -> Engine {
    let mut registry = PolicyRegistry::new();
    for spec in specs {
        if options.drop_policy.as_deref() == Some(spec.name) {
            continue;
        }
        let mut policy = spec.build();
        if let Some(probe) = &options.probe {
            policy = policy.with_probe(probe.clone());
        }
        registry
            .register(policy)
            .expect("scenario policy names are unique");
    }
    Engine::new(db, registry).with_scope_checks(options.scope_checks)
}

/// A fully wired demo: data, engine, endpoints.
pub struct Scenario {
    pub name: &'static str,
    pub scale: u32,
    pub db: Arc<Database>,
    pub engine: Arc<Engine>,
    pub specs: Vec<PolicySpec>,
    pub endpoints: Vec<Arc<dyn Endpoint>>,
}

impl Scenario {
    pub fn endpoint(&self, api: &str) -> Option<&Arc<dyn Endpoint>> {
        self.endpoints.iter().find(|e| e.api().as_str() == api)
    }

    /// A cross-section of users for equivalence sweeps: `None` is anonymous.
    pub fn sample_users(&self, limit: usize) -> Vec<Option<i64>> {
        let mut users = vec![None];
        users.extend(seed::user_ids(&self.db, limit).into_iter().map(Some));
        users
    }
}

/// Builds one scenario by name. Implementations are registered in
/// [`BUILDERS`] and selected at runtime (`--scenario <name>`).
///
/// Seeding and wiring are separate steps so callers can supply their own
/// database — e.g. the service loading a previously written snapshot — and
/// still get the scenario's policies and endpoints.
pub trait ScenarioBuilder: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn seed(&self, scale: u32) -> Result<Database, StoreError>;
    fn wire(&self, scale: u32, db: Database) -> Scenario;

    fn build(&self, scale: u32) -> Result<Scenario, StoreError> {
        Ok(self.wire(scale, self.seed(scale)?))
    }
}

struct IntranetSmall;
struct Intranet;
struct IntranetDept;
struct SocialSmall;
struct Social;
struct Wide;

pub static BUILDERS: &[&dyn ScenarioBuilder] =
    &[&IntranetSmall, &Intranet, &IntranetDept, &SocialSmall, &Social, &Wide];

pub fn find_builder(name: &str) -> Option<&'static dyn ScenarioBuilder> {
    BUILDERS.iter().copied().find(|b| b.name() == name)
}

pub fn builder_names() -> Vec<&'static str> {
    BUILDERS.iter().map(|b| b.name()).collect()
}

fn assemble(
    name: &'static str,
    scale: u32,
    db: Database,
    specs: Vec<PolicySpec>,
    endpoints: Vec<Arc<dyn Endpoint>>,
) -> Scenario {
    let db = Arc::new(db);
    let engine = Arc::new(build_engine(db.clone(), &specs, EngineOptions::default()));
    Scenario {
        name,
        scale,
        db,
        engine,
        specs,
        endpoints,
    }
}

impl ScenarioBuilder for IntranetSmall {
    fn name(&self) -> &'static str {
        "intranet-small"
    }

    fn summary(&self) -> &'static str {
        "hand-picked company directory: 3 users, 2 events, worked examples"
    }

    fn seed(&self, _scale: u32) -> Result<Database, StoreError> {
        seed::intranet_small()
    }

    fn wire(&self, scale: u32, db: Database) -> Scenario {
        assemble(
            self.name(),
            scale,
            db,
            policies::intranet_specs(policies::AddressGranularity::ByFriendship),
            crate::endpoint::intranet_endpoints(policies::AddressGranularity::ByFriendship),
        )
    }
}

impl ScenarioBuilder for Intranet {
    fn name(&self) -> &'static str {
        "intranet"
    }

    fn summary(&self) -> &'static str {
        "generated company directory: 200 users and 1000 events per scale unit"
    }

    fn seed(&self, scale: u32) -> Result<Database, StoreError> {
        seed::intranet(scale)
    }

    fn wire(&self, scale: u32, db: Database) -> Scenario {
        assemble(
            self.name(),
            scale,
            db,
            policies::intranet_specs(policies::AddressGranularity::ByFriendship),
            crate::endpoint::intranet_endpoints(policies::AddressGranularity::ByFriendship),
        )
    }
}

impl ScenarioBuilder for IntranetDept {
    fn name(&self) -> &'static str {
        "intranet-dept"
    }

    fn summary(&self) -> &'static str {
        "intranet-small with address granularity keyed on shared department"
    }

    fn seed(&self, _scale: u32) -> Result<Database, StoreError> {
        seed::intranet_small()
    }

    fn wire(&self, scale: u32, db: Database) -> Scenario {
        assemble(
            self.name(),
            scale,
            db,
            policies::intranet_specs(policies::AddressGranularity::ByDepartment),
            crate::endpoint::intranet_endpoints(policies::AddressGranularity::ByDepartment),
        )
    }
}

impl ScenarioBuilder for SocialSmall {
    fn name(&self) -> &'static str {
        "social-small"
    }

    fn summary(&self) -> &'static str {
        "hand-picked feed: 5 users, 4 posts, follow-gated visibility"
    }

    fn seed(&self, _scale: u32) -> Result<Database, StoreError> {
        seed::social_small()
    }

    fn wire(&self, scale: u32, db: Database) -> Scenario {
        assemble(
            self.name(),
            scale,
            db,
            policies::social_specs(),
            crate::endpoint::social_endpoints(),
        )
    }
}

impl ScenarioBuilder for Social {
    fn name(&self) -> &'static str {
        "social"
    }

    fn summary(&self) -> &'static str {
        "generated feed: 100 users and 2000 posts per scale unit"
    }

    fn seed(&self, scale: u32) -> Result<Database, StoreError> {
        seed::social(scale)
    }

    fn wire(&self, scale: u32, db: Database) -> Scenario {
        assemble(
            self.name(),
            scale,
            db,
            policies::social_specs(),
            crate::endpoint::social_endpoints(),
        )
    }
}

impl ScenarioBuilder for Wide {
    fn name(&self) -> &'static str {
        "wide"
    }

    fn summary(&self) -> &'static str {
        "one 101-column table, 10000 rows per scale unit, for overhead probes"
    }

    fn seed(&self, scale: u32) -> Result<Database, StoreError> {
        seed::wide(scale)
    }

    fn wire(&self, scale: u32, db: Database) -> Scenario {
        assemble(
            self.name(),
            scale,
            db,
            policies::wide_specs(policies::WIDE_DEFAULT_CONDITIONS),
            crate::endpoint::wide_endpoints(),
        )
    }
}

//! Sweeps every endpoint with both implementations and reports differences.

use serde::Serialize;

use fieldgate_core::policy::RequestContext;

use crate::endpoint::{Endpoint, EndpointError, Params};
use crate::scenario::{user_context, Scenario};

/// How many mismatches a report keeps verbatim; the count is always exact.
const MISMATCH_DETAIL_CAP: usize = 25;

#[derive(Debug, Serialize)]
pub struct Mismatch {
    pub api: String,
    pub user: Option<i64>,
    pub params: Params,
    pub enforced: serde_json::Value,
    pub baseline: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct ApiStat {
    pub api: String,
    pub cases: usize,
    pub mismatches: usize,
}

#[derive(Debug, Serialize)]
pub struct EquivalenceReport {
    pub scenario: String,
    pub users: usize,
    pub cases: usize,
    pub mismatch_count: usize,
    pub mismatches: Vec<Mismatch>,
    pub by_api: Vec<ApiStat>,
}

impl EquivalenceReport {
    pub fn is_clean(&self) -> bool {
        self.mismatch_count == 0
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "scenario: {} ({} users incl. anonymous)\n",
            self.scenario, self.users
        ));
        out.push_str(&format!("{:<24} {:>8} {:>12}\n", "api", "cases", "mismatches"));
        for stat in &self.by_api {
            out.push_str(&format!(
                "{:<24} {:>8} {:>12}\n",
                stat.api, stat.cases, stat.mismatches
            ));
        }
        out.push_str(&format!(
            "{:<24} {:>8} {:>12}\n",
            "total", self.cases, self.mismatch_count
        ));
        out
    }
}

/// Errors become part of the comparison: a case only matches when both
/// sides succeed with equal JSON or fail with the same message.
fn outcome_json(result: Result<serde_json::Value, EndpointError>) -> serde_json::Value {
    match result {
        Ok(v) => v,
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    }
}

/// Runs every endpoint x sampled user x sampled params through both the
/// enforced and the inline-check path.
pub fn run_equivalence(scenario: &Scenario, user_limit: usize) -> EquivalenceReport {
    let users = scenario.sample_users(user_limit);
    let mut cases = 0;
    let mut mismatch_count = 0;
    let mut mismatches = Vec::new();
    let mut by_api = Vec::new();

    for ep in &scenario.endpoints {
        let api = ep.api();
        let param_sets = ep.sample_params(&scenario.db);
        let mut api_cases = 0;
        let mut api_mismatches = 0;
        for params in &param_sets {
            for user in &users {
                api_cases += 1;
                let (enforced, baseline) = run_case(scenario, ep.as_ref(), *user, params);
                if enforced != baseline {
                    api_mismatches += 1;
                    if mismatches.len() < MISMATCH_DETAIL_CAP {
                        mismatches.push(Mismatch {
                            api: api.to_string(),
                            user: *user,
                            params: params.clone(),
                            enforced,
                            baseline,
                        });
                    }
                }
            }
        }
        cases += api_cases;
        mismatch_count += api_mismatches;
        by_api.push(ApiStat {
            api: api.to_string(),
            cases: api_cases,
            mismatches: api_mismatches,
        });
    }

    EquivalenceReport {
        scenario: scenario.name.to_string(),
        users: users.len(),
        cases,
        mismatch_count,
        mismatches,
        by_api,
    }
}

fn run_case(
    scenario: &Scenario,
    ep: &dyn Endpoint,
    user: Option<i64>,
    params: &Params,
) -> (serde_json::Value, serde_json::Value) {
    let identity = match user_context(&scenario.db, user) {
        Ok(u) => u,
        Err(e) => {
            let err = serde_json::json!({ "error": e.to_string() });
            return (err.clone(), err);
        }
    };
    let ctx = RequestContext::new(identity.clone(), ep.api());
    let enforced = outcome_json(ep.enforced(&scenario.engine, &ctx, params));
    let baseline = outcome_json(ep.baseline(&scenario.db, &identity, params));
    (enforced, baseline)
}

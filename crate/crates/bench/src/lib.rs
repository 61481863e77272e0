//! Fixed problems shared by the criterion benches.

use ssda_core::estimators::{dip_cov_fit, ols_fit};
use ssda_core::masft::{DomainData, SsdaData};
use ssda_core::rng::{derive_seed, Role};
use ssda_core::scm::{make_aw_environments, make_ca_environments, sample_labeled, sample_unlabeled, EnvironmentSet};
use ssda_core::LinearPredictor;

/// One sampled SSDA problem plus its generating environment.
pub struct Fixture {
    pub env: EnvironmentSet,
    pub data: SsdaData,
}

fn sample(env: EnvironmentSet, n_src: usize, n_tar: usize, seed: u64) -> Fixture {
    let s = |tag: u64, role: Role| derive_seed(seed, 0, tag, role);
    let sources = env
        .sources()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let tag = i as u64 + 1;
            DomainData {
                labeled: sample_labeled(p, n_src, s(tag, Role::Labeled)).unwrap().with_tag(i + 1),
                unlabeled: sample_unlabeled(p, n_src, s(tag, Role::Unlabeled)).unwrap().with_tag(i + 1),
            }
        })
        .collect();
    let data = SsdaData {
        sources,
        target_labeled: sample_labeled(env.target(), n_tar, s(0, Role::Labeled)).unwrap(),
        target_unlabeled: Some(sample_unlabeled(env.target(), n_src, s(0, Role::Unlabeled)).unwrap()),
        validation: sample_labeled(env.target(), n_tar, s(0, Role::Validation)).unwrap(),
    };
    Fixture { env, data }
}

pub fn ca_fixture(d: usize, r: usize, sources: usize, n_src: usize, n_tar: usize) -> Fixture {
    sample(make_ca_environments(d, r, sources, 1).unwrap(), n_src, n_tar, 1)
}

pub fn aw_fixture(d: usize, r: usize, sources: usize, n_src: usize, n_tar: usize) -> Fixture {
    sample(make_aw_environments(d, r, sources, 2).unwrap(), n_src, n_tar, 2)
}

impl Fixture {
    pub fn source_ols(&self) -> LinearPredictor {
        ols_fit(&self.data.sources[0].labeled).unwrap()
    }

    pub fn dip(&self, r: usize) -> LinearPredictor {
        let src = &self.data.sources[0];
        dip_cov_fit(&src.labeled, &src.unlabeled, self.data.target_unlabeled.as_ref().unwrap(), r).unwrap()
    }
}

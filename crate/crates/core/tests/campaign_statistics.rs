use nedm_core::comagnetometer::{run_campaign, CampaignConfig, CountingMode, CycleRecord};
use nedm_core::inference::{campaign_estimator, CampaignEstimate, EstimatorSettings};
use nedm_core::quantities::{PhysicalConstants, UnitSystem};

fn settings(cfg: &CampaignConfig) -> EstimatorSettings {
    EstimatorSettings {
        e_field_v_per_cm: cfg.e_field_v_per_cm,
        free_time_s: cfg.free_time_s,
        visibility: cfg.visibility,
        f_hg_reference: None,
    }
}

fn records(cfg: &CampaignConfig) -> Vec<CycleRecord> {
    run_campaign(cfg, &UnitSystem::default(), &PhysicalConstants::default()).unwrap()
}

fn estimate(cfg: &CampaignConfig) -> CampaignEstimate {
    campaign_estimator(&records(cfg), &settings(cfg), &UnitSystem::default()).unwrap()
}

#[test]
fn default_campaign_recovers_injected_edm() {
    let cfg = CampaignConfig {
        true_dn_e_cm: 2e-26,
        cycles: 10_000,
        ..CampaignConfig::default()
    };
    let e = estimate(&cfg);
    assert!((e.dn_hat - 2e-26).abs() < 4.0 * e.standard_error, "{e:?}");
}

#[test]
fn counting_noise_only_is_centred_on_zero() {
    let cfg = CampaignConfig {
        cycles: 10_000,
        seed: 77,
        b_drift_sd_t: 0.0,
        f_hg_noise_sd_rel: 0.0,
        ..CampaignConfig::default()
    };
    let e = estimate(&cfg);
    assert!(e.dn_hat.abs() < 4.0 * e.standard_error, "{e:?}");
    assert!(!e.degenerate);
}

#[test]
fn propagated_error_matches_seed_scatter() {
    // Pulls (d̂ − d)/SE over independent seeds should have unit spread.
    let seeds = 60;
    let pulls: Vec<f64> = (0..seeds)
        .map(|seed| {
            let cfg = CampaignConfig {
                true_dn_e_cm: 1e-25,
                cycles: 400,
                seed,
                ..CampaignConfig::default()
            };
            let e = estimate(&cfg);
            (e.dn_hat - 1e-25) / e.standard_error
        })
        .collect();
    let mean = pulls.iter().sum::<f64>() / seeds as f64;
    let var = pulls.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
    assert!(mean.abs() < 0.5, "mean pull {mean}");
    assert!((0.7..1.3).contains(&var.sqrt()), "pull spread {}", var.sqrt());
}

#[test]
fn birge_ratio_near_one_with_noise() {
    let e = estimate(&CampaignConfig {
        cycles: 2000,
        seed: 5,
        ..CampaignConfig::default()
    });
    let b = e.birge_ratio.unwrap();
    assert!((0.85..1.15).contains(&b), "{b}");
}

#[test]
fn mercury_ratio_cancels_common_mode_field() {
    let base = CampaignConfig {
        cycles: 200,
        seed: 3,
        ..CampaignConfig::default()
    };
    let shifted = CampaignConfig {
        b_offset_t: 5e-9,
        ..base
    };
    let (a, b) = (records(&base), records(&shifted));
    // The neutron frequency itself moves by γ_n·δB/2π ≈ 0.15 Hz ...
    let df: f64 = a.iter().zip(&b).map(|(x, y)| y.f_n - x.f_n).sum::<f64>() / a.len() as f64;
    assert!((df - 1.832_471_71e8 * 5e-9 / (2.0 * std::f64::consts::PI)).abs() < 1e-3);
    // ... while the ratio-based estimate stays put.
    let units = UnitSystem::default();
    let ea = campaign_estimator(&a, &settings(&base), &units).unwrap();
    let eb = campaign_estimator(&b, &settings(&shifted), &units).unwrap();
    assert!((ea.dn_hat - eb.dn_hat).abs() < 0.5 * ea.standard_error);
}

#[test]
fn se_scales_with_cycles() {
    let cfg = |cycles| CampaignConfig {
        cycles,
        seed: 2,
        counting: CountingMode::Binomial,
        ..CampaignConfig::default()
    };
    let small = estimate(&cfg(100)).standard_error;
    let large = estimate(&cfg(10_000)).standard_error;
    assert!((small / large / 10.0 - 1.0).abs() < 0.25);
}

#[test]
fn fixed_mercury_reference_is_supported() {
    let cfg = CampaignConfig {
        true_dn_e_cm: 1e-22,
        cycles: 10,
        ..CampaignConfig::default()
    }
    .noiseless();
    let recs = records(&cfg);
    let f = recs[0].f_hg;
    let s = EstimatorSettings {
        f_hg_reference: Some(f),
        ..settings(&cfg)
    };
    let e = campaign_estimator(&recs, &s, &UnitSystem::default()).unwrap();
    assert!((e.dn_hat / 1e-22 - 1.0).abs() < 1e-9);
}

#[test]
fn poisson_totals_feed_the_estimator() {
    let cfg = CampaignConfig {
        cycles: 400,
        seed: 8,
        counting: CountingMode::PoissonTotal,
        ..CampaignConfig::default()
    };
    let recs = records(&cfg);
    assert!(recs.iter().any(|r| r.n_up + r.n_down != cfg.neutrons_per_cycle));
    let e = campaign_estimator(&recs, &settings(&cfg), &UnitSystem::default()).unwrap();
    assert!(e.dn_hat.abs() < 4.0 * e.standard_error);
}

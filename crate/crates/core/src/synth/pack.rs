//! The built-in profile pack and day plan.
//!
//! Groups:
//!
//! * `device`: 7 Classic and 7 LE devices. Timing and meta rate follow the
//!   chipset, sizes follow the device.
//! * `wide`: device/app/action captures across both flavors.
//! * `app-high`: 38 apps on one Classic watch. App `c` uses size signature
//!   `c / 2` (a pair of uniform size bands, one per direction), timing
//!   variant `c % 2` (intra-burst gaps with or without a 12 ms floor) and volume level
//!   `(c / 2) % 3`.
//! * `app-low`: 18 apps that send almost nothing and look alike.
//! * `diabetes`: 6 actions of one app, same sizes, told apart by when the
//!   second burst comes.
//! * `day`: 17 actions used by the day plan.
//! * `background`: idle traffic between a watch and its phone.

use std::collections::BTreeMap;

use super::{BurstCount, BurstModel, CatalogEntry, DayPlan, Profile, ProfilePack, SizeMixture, PACK_VERSION};
use crate::trace::Flavor;

pub const BACKGROUND: &str = "NoApp_Background";

const CLASSIC_DEVICES: [(&str, &str); 7] = [
    ("SamsungGalaxyWatch", "Broadcom"),
    ("FossilExploristHR", "Qualcomm"),
    ("AppleWatch", "Apple"),
    ("HuaweiWatch2", "Broadcom"),
    ("FitbitVersa2", "Cypress"),
    ("SonyMDR", "Qualcomm"),
    ("AirPods", "Apple"),
];

const LE_DEVICES: [(&str, &str); 7] = [
    ("AppleWatch", "Apple"),
    ("FitbitCharge2", "Microelectronics"),
    ("FitbitCharge3", "Cypress"),
    ("HuaweiBand3e", "RivieraWaves"),
    ("MiBand2", "Dialog"),
    ("MiBand3", "Dialog"),
    ("MiBand4", "Dialog"),
];

/// (intra-burst gap mean, meta rate) per chipset.
fn chipset_timing(chipset: &str) -> (f64, f64) {
    match chipset {
        "Broadcom" => (0.004, 0.30),
        "Qualcomm" => (0.009, 0.20),
        "Apple" => (0.0025, 0.40),
        "Cypress" => (0.014, 0.25),
        "Microelectronics" => (0.022, 0.15),
        "RivieraWaves" => (0.017, 0.35),
        _ => (0.030, 0.30),
    }
}

pub const HIGH_VOLUME_APPS: [&str; 38] = [
    "SalatTime", "MapMyFitness", "Citymapper", "Calm", "Outlook", "DiabetesM", "SmokingLog", "MapMyRun",
    "SleepTracking", "Mobills", "Fit", "Weather", "Running", "FitWorkout", "FitBreathe", "FoursquareCityGuide",
    "Glide", "Translate", "Shazam", "Qardio", "Krone", "KeepNotes", "FindMyPhone", "Telegram", "Strava",
    "DCLMRadio", "Lifesum", "Endomondo", "PlayStore", "Maps", "AppInTheAir", "Bring", "Spotify", "Meduza",
    "FITIVPlus", "ChinaDaily", "WashPost", "Camera",
];

pub const LOW_VOLUME_APPS: [&str; 18] = [
    "Reminders", "Battery", "DuaKhatqmAlQuran", "WearCasts", "DailyTracking", "ASB", "NoApp", "HeartRate",
    "Workout", "AthkarOfPrayer", "Alarm", "GooglePay", "Flashlight", "Phone", "PlayMusic", "HealthyRecipes",
    "Sleep", "Medisafe",
];

pub const DIABETES_ACTIONS: [&str; 6] = ["AddCalorie", "AddCarbs", "AddFat", "AddGlucose", "AddInsulin", "AddProteins"];

/// (action label, popular)
pub const DAY_ACTIONS: [(&str, bool); 17] = [
    ("DiabetesM_AddCalorie", false),
    ("DiabetesM_AddCarbs", false),
    ("DiabetesM_AddFat", false),
    ("DiabetesM_AddGlucose", false),
    ("DiabetesM_AddInsulin", false),
    ("DiabetesM_AddProteins", false),
    ("Endomondo_BrowseMap", false),
    ("Endomondo_Running", true),
    ("FoursquareCityGuide_Coffees", false),
    ("FoursquareCityGuide_Leisure", false),
    ("FoursquareCityGuide_NightLife", false),
    ("FoursquareCityGuide_Restaurants", false),
    ("FoursquareCityGuide_Shopping", false),
    ("HealthyRecipes_SearchRecipe", true),
    ("Lifesum_AddFood", false),
    ("Lifesum_AddWater", true),
    ("PlayStore_Browse", true),
];

/// (device, app, action, flavor)
const WIDE: [(&str, &str, &str, Flavor); 30] = [
    ("GalaxyWatch", "EndomondoApp", "Running", Flavor::Classic),
    ("GalaxyWatch", "EndomondoApp", "Walking", Flavor::Classic),
    ("GalaxyWatch", "FITIVApp", "Running", Flavor::Classic),
    ("GalaxyWatch", "FITIVApp", "Walking", Flavor::Classic),
    ("GalaxyWatch", "MapMyRun", "Running", Flavor::Classic),
    ("GalaxyWatch", "MapMyRun", "Walking", Flavor::Classic),
    ("GalaxyWatch", "NoApp", "EmailReceived", Flavor::Classic),
    ("GalaxyWatch", "NoApp", "PhoneCallMissed", Flavor::Classic),
    ("GalaxyWatch", "NoApp", "SmsReceived", Flavor::Classic),
    ("GalaxyWatch", "MyFitnessPalApp", "CaloriesAdd", Flavor::Classic),
    ("FossilExploristHR", "EndomondoApp", "Running", Flavor::Classic),
    ("FossilExploristHR", "NoApp", "EmailReceived", Flavor::Classic),
    ("FossilExploristHR", "NoApp", "PhoneCallMissed", Flavor::Classic),
    ("HuaweiWatch2", "Endomondo", "BrowseMap", Flavor::Classic),
    ("HuaweiWatch2", "Lifesum", "AddFood", Flavor::Classic),
    ("HuaweiWatch2", "PlayStore", "Browse", Flavor::Classic),
    ("AppleWatch", "PhotoApp", "LiveStream", Flavor::Classic),
    ("AppleWatch", "Music", "Skip", Flavor::Classic),
    ("AppleWatch", "ECG", "Sync", Flavor::Classic),
    ("Airpods", "GooglePlayMusic", "Play", Flavor::Classic),
    ("MDR", "GooglePlayMusic", "Play", Flavor::Classic),
    ("FitbitCharge2", "Fitbit", "Sync", Flavor::LowEnergy),
    ("FitbitCharge3", "Fitbit", "Sync", Flavor::LowEnergy),
    ("HuaweiBand3", "HuaweiApp", "Sync", Flavor::LowEnergy),
    ("MiBand2", "MiApp", "Sync", Flavor::LowEnergy),
    ("MiBand2", "MiApp", "Walking", Flavor::LowEnergy),
    ("MiBand3", "MiApp", "Sync", Flavor::LowEnergy),
    ("MiBand3", "MiApp", "Walking", Flavor::LowEnergy),
    ("MiBand4", "MiApp", "Sync", Flavor::LowEnergy),
    ("MiBand4", "MiApp", "Walking", Flavor::LowEnergy),
];

fn labels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[allow(clippy::too_many_arguments)]
fn profile(
    name: String,
    flavor: Flavor,
    group: &str,
    labels: BTreeMap<String, String>,
    m2s: SizeMixture,
    s2m: SizeMixture,
    bursts: BurstModel,
    meta_rate: f64,
) -> Profile {
    Profile {
        name,
        flavor,
        group: group.into(),
        labels,
        m2s,
        s2m,
        m2s_fraction: 0.45,
        bursts,
        meta_rate,
        volume_scale: 1.0,
    }
}

fn range(min: u32, max: u32, ppb: [u32; 2], intra: f64, inter: f64, start: f64) -> BurstModel {
    BurstModel {
        count: BurstCount::Range { min, max },
        packets_per_burst: ppb,
        intra_gap_mean: intra,
        intra_gap_floor: 0.0,
        inter_gap_mean: inter,
        start_delay: start,
    }
}

fn device_profiles() -> Vec<Profile> {
    let mut out = Vec::new();
    for (i, (dev, chip)) in CLASSIC_DEVICES.iter().enumerate() {
        let i32_ = i as u32;
        let (intra, meta) = chipset_timing(chip);
        let name = dev.to_string();
        out.push(profile(
            name,
            Flavor::Classic,
            "device",
            labels(&[("device", dev), ("app", "mixed"), ("action", "mixed")]),
            SizeMixture::atoms(&[(6 + 4 * i32_, 0.3)]).with_noise(40 + 70 * i32_, 140 + 70 * i32_, 0.7),
            SizeMixture::atoms(&[(10 + 5 * i32_, 0.4)]).with_noise(120 + 90 * i32_, 260 + 90 * i32_, 0.6),
            range(3 + i32_ % 3, 6 + i32_ % 3, [4 + i32_, 10 + 2 * i32_], intra, 0.8 + 0.35 * i as f64, 0.3),
            meta,
        ));
    }
    for (i, (dev, chip)) in LE_DEVICES.iter().enumerate() {
        let i32_ = i as u32;
        let (intra, meta) = chipset_timing(chip);
        let name = if *dev == "AppleWatch" { "AppleWatchLE".to_string() } else { dev.to_string() };
        out.push(profile(
            name,
            Flavor::LowEnergy,
            "device",
            labels(&[("device", dev), ("app", "mixed"), ("action", "mixed")]),
            SizeMixture::atoms(&[(5 + 3 * i32_, 0.4)]).with_noise(20 + 25 * i32_, 60 + 25 * i32_, 0.6),
            SizeMixture::atoms(&[(8 + 4 * i32_, 0.3)]).with_noise(25 + 28 * i32_, 75 + 28 * i32_, 0.7),
            range(3 + i32_ % 3, 6 + i32_ % 3, [3 + i32_, 8 + 2 * i32_], intra, 0.9 + 0.3 * i as f64, 0.3),
            meta,
        ));
    }
    out
}

fn wide_profiles() -> Vec<Profile> {
    let mut devices: Vec<&str> = Vec::new();
    let mut apps: Vec<&str> = Vec::new();
    WIDE.iter()
        .enumerate()
        .map(|(i, (dev, app, action, flavor))| {
            let d = devices.iter().position(|x| x == dev).unwrap_or_else(|| {
                devices.push(dev);
                devices.len() - 1
            }) as u32;
            let a = apps.iter().position(|x| x == app).unwrap_or_else(|| {
                apps.push(app);
                apps.len() - 1
            }) as u32;
            let x = u32::from(*action == "Walking");
            let full = format!("{dev}_{app}_{action}");
            let (m2s, s2m) = match flavor {
                Flavor::Classic => (
                    SizeMixture::atoms(&[(12, 0.3)]).with_noise(46 + 37 * ((d * 5 + a * 3) % 20), 166 + 37 * ((d * 5 + a * 3) % 20), 0.7),
                    SizeMixture::atoms(&[(17, 0.3)]).with_noise(60 + 41 * ((d * 3 + a * 7 + i as u32) % 19), 200 + 41 * ((d * 3 + a * 7 + i as u32) % 19), 0.7),
                ),
                Flavor::LowEnergy => (
                    SizeMixture::atoms(&[(7 + d, 0.4)]).with_noise(20 + 9 * ((d * 5 + a) % 20), 70 + 9 * ((d * 5 + a) % 20), 0.6),
                    SizeMixture::atoms(&[(9 + d, 0.3)]).with_noise(25 + 8 * ((d * 3 + i as u32) % 20), 80 + 8 * ((d * 3 + i as u32) % 20), 0.7),
                ),
            };
            let inter = 1.0 + 0.3 * f64::from(x) + 0.1 * f64::from(a % 4);
            profile(
                full.clone(),
                *flavor,
                "wide",
                labels(&[("device", dev), ("app", app), ("action", &full)]),
                m2s,
                s2m,
                range(3, 6, [6 + 2 * (d % 3), 14 + 3 * (a % 3)], 0.004 * f64::from(1 + d % 3), inter, 0.5),
                0.25,
            )
        })
        .collect()
}

fn high_volume_profiles() -> Vec<Profile> {
    HIGH_VOLUME_APPS
        .iter()
        .enumerate()
        .map(|(c, app)| {
            let s = (c / 2) as u32;
            let v = c % 2;
            let m2s_lo = 46 + 45 * s;
            let s2m_lo = 46 + 45 * ((s * 7) % 19);
            let mut p = profile(
                app.to_string(),
                Flavor::Classic,
                "app-high",
                labels(&[("device", "HuaweiWatch2"), ("app", app), ("action", "Open")]),
                SizeMixture::atoms(&[(12, 0.3)]).with_noise(m2s_lo, m2s_lo + 140, 0.7),
                SizeMixture::atoms(&[(17, 0.3)]).with_noise(s2m_lo, s2m_lo + 140, 0.7),
                range(4, 6, [12, 20], if v == 0 { 0.003 } else { 0.006 }, 2.5, 0.5),
                0.2,
            );
            if v == 1 {
                p.bursts.intra_gap_floor = 0.012;
            }
            p.volume_scale = [0.6, 1.0, 1.6][(s % 3) as usize];
            p
        })
        .collect()
}

fn low_volume_profiles() -> Vec<Profile> {
    LOW_VOLUME_APPS
        .iter()
        .enumerate()
        .map(|(i, app)| {
            profile(
                app.to_string(),
                Flavor::Classic,
                "app-low",
                labels(&[("device", "HuaweiWatch2"), ("app", app), ("action", "Open")]),
                SizeMixture::atoms(&[(12, 0.5)]).with_noise(10, 40, 0.5),
                SizeMixture::atoms(&[(17, 0.4), (20 + i as u32, 0.3)]).with_noise(10, 40, 0.3),
                range(1, 2, [1, 4], 0.05, 5.0, 1.0),
                0.5,
            )
        })
        .collect()
}

fn diabetes_profiles() -> Vec<Profile> {
    DIABETES_ACTIONS
        .iter()
        .enumerate()
        .map(|(k, action)| {
            let full = format!("DiabetesM_{action}");
            let mut starts = vec![1.0, 4.0 + 2.0 * k as f64];
            if *action == "AddInsulin" {
                starts.push(starts[1] + 1.5);
            }
            profile(
                full.clone(),
                Flavor::Classic,
                "diabetes",
                labels(&[("device", "HuaweiWatch2"), ("app", "DiabetesM"), ("action", &full)]),
                SizeMixture::atoms(&[(12, 0.3)]).with_noise(60, 200, 0.7),
                SizeMixture::atoms(&[(17, 0.3), (230, 0.3)]).with_noise(100, 400, 0.4),
                BurstModel {
                    count: BurstCount::Schedule { starts, jitter: 1.5 },
                    packets_per_burst: [8, 14],
                    intra_gap_mean: 0.006,
                    intra_gap_floor: 0.0,
                    inter_gap_mean: 1.0,
                    start_delay: 0.0,
                },
                0.25,
            )
        })
        .collect()
}

fn day_profiles() -> Vec<Profile> {
    DAY_ACTIONS
        .iter()
        .enumerate()
        .map(|(j, (action, _))| {
            let j = j as u32;
            let app = action.split('_').next().unwrap_or(action);
            let labels = labels(&[("device", "HuaweiWatch2"), ("app", app), ("action", action)]);
            let name = format!("day:{action}");
            if app == "DiabetesM" {
                // Same sizes and bursts; only the amount of traffic differs.
                let mut p = profile(
                    name,
                    Flavor::Classic,
                    "day",
                    labels,
                    SizeMixture::atoms(&[(12, 0.2)]).with_noise(80, 220, 0.8),
                    SizeMixture::atoms(&[(17, 0.2)]).with_noise(300, 450, 0.8),
                    range(3, 3, [12, 16], 0.005, 1.5, 0.2),
                    0.2,
                );
                p.volume_scale = 0.6 + 0.2 * f64::from(j);
                return p;
            }
            let m2s_lo = 60 + 52 * j;
            let s2m_lo = 60 + 52 * ((j * 5) % 17);
            profile(
                name,
                Flavor::Classic,
                "day",
                labels,
                SizeMixture::atoms(&[(12, 0.2)]).with_noise(m2s_lo, m2s_lo + 100, 0.8),
                SizeMixture::atoms(&[(17, 0.2)]).with_noise(s2m_lo, s2m_lo + 100, 0.8),
                range(2, 4, [10, 20], 0.005 * f64::from(1 + j % 3), 1.5, 0.2),
                0.2,
            )
        })
        .collect()
}

fn background_profile() -> Profile {
    profile(
        BACKGROUND.into(),
        Flavor::Classic,
        "background",
        labels(&[("device", "HuaweiWatch2"), ("app", "NoApp"), ("action", "NoApp")]),
        SizeMixture::band(10, 40),
        SizeMixture::band(10, 40),
        BurstModel {
            count: BurstCount::Continuous,
            packets_per_burst: [1, 2],
            intra_gap_mean: 0.02,
            intra_gap_floor: 0.0,
            inter_gap_mean: 20.0,
            start_delay: 0.0,
        },
        0.4,
    )
}

pub fn default_pack() -> ProfilePack {
    let mut profiles = device_profiles();
    profiles.extend(wide_profiles());
    profiles.extend(high_volume_profiles());
    profiles.extend(low_volume_profiles());
    profiles.extend(diabetes_profiles());
    profiles.extend(day_profiles());
    profiles.push(background_profile());
    let chipsets = CLASSIC_DEVICES
        .iter()
        .chain(LE_DEVICES.iter())
        .map(|(d, c)| (d.to_string(), c.to_string()))
        .collect();
    ProfilePack { version: PACK_VERSION, chipsets, profiles }
}

/// Day plan over the `day` group with the pack's background profile.
pub fn default_day_plan(pack: &ProfilePack) -> DayPlan {
    let popular: BTreeMap<&str, bool> = DAY_ACTIONS.iter().copied().collect();
    DayPlan {
        catalog: pack
            .group("day")
            .iter()
            .map(|p| CatalogEntry {
                profile: p.name.clone(),
                popular: popular.get(p.label("action").as_str()).copied().unwrap_or(false),
            })
            .collect(),
        background: pack.get(BACKGROUND).map(|p| p.name.clone()),
        ..DayPlan::default()
    }
}

#![allow(dead_code)]

use gridprice::io::{synth_weather, SynthParams, WeatherTable};
use gridprice::model::{defaults, TimeGrid};
use gridprice::SystemConfig;

pub fn weather(seed: u64, year: i32) -> WeatherTable {
    synth_weather(seed, &[year], &SynthParams::default()).unwrap()
}

/// Default four-technology system on `hours` hourly snapshots starting at row `start`.
pub fn desk(name: &str, wx: &WeatherTable, start: usize, hours: usize) -> SystemConfig {
    let time = TimeGrid::regular(wx.timestamps[start], hours, 1).unwrap();
    let (w, s) = wx.availability::<f64>();
    defaults::desk_config(name, time, w[start..start + hours].to_vec(), s[start..start + hours].to_vec())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn population_std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

//! CSV emission with the effective config echoed as `#` comment lines.
//!
//! Schema: `algorithm,snr1_db,snr2_db,trials,failures,ber,ber_stderr,mse,`
//! `iters,mse_iter_1,...,mse_iter_K,safeguards,wall_time_ms,seed`, with `K`
//! the configured iteration budget. Missing values render as empty fields.

use crate::config::ExperimentConfig;
use crate::driver::ResultRow;

/// Header line for a run with iteration budget `k`.
pub fn csv_header(k: usize) -> String {
    let mut cols = vec![
        "algorithm".to_string(),
        "snr1_db".to_string(),
        "snr2_db".to_string(),
        "trials".to_string(),
        "failures".to_string(),
        "ber".to_string(),
        "ber_stderr".to_string(),
        "mse".to_string(),
        "iters".to_string(),
    ];
    for i in 1..=k {
        cols.push(format!("mse_iter_{i}"));
    }
    cols.push("safeguards".to_string());
    cols.push("wall_time_ms".to_string());
    cols.push("seed".to_string());
    cols.join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_row(row: &ResultRow, k: usize) -> String {
    let mut fields = vec![
        row.algorithm.clone(),
        row.snr1_db.to_string(),
        row.snr2_db.to_string(),
        row.trials.to_string(),
        row.failures.to_string(),
        opt(row.ber),
        opt(row.ber_stderr),
        opt(row.mse),
        row.iters.to_string(),
    ];
    for i in 0..k {
        fields.push(opt(row.mse_per_iteration.get(i).copied().flatten()));
    }
    fields.push(row.safeguards.to_string());
    fields.push(row.wall_time_ms.to_string());
    fields.push(row.seed.to_string());
    fields.join(",")
}

/// Render the full CSV document: config echo, conventions, header, rows.
pub fn render_csv(config: &ExperimentConfig, rows: &[ResultRow]) -> String {
    let mut out = String::new();
    out.push_str("# detect results\n");
    out.push_str(
        "# convention: H entries CN(0,1/L), C entries CN(0,1/M), unit-energy symbols; \
         SNR_i = 1/sigma_i^2, sigma^2 = 10^(-SNR_dB/10)\n",
    );
    out.push_str(
        "# seeding: trial seed = splitmix64(splitmix64(splitmix64(master_seed) ^ grid_index) ^ trial_index)\n",
    );
    for (key, value) in config.echo_pairs() {
        out.push_str(&format!("# {key}={value}\n"));
    }
    out.push_str(&csv_header(config.iterations));
    out.push('\n');
    for row in rows {
        out.push_str(&render_row(row, config.iterations));
        out.push('\n');
    }
    out
}

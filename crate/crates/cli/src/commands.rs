use std::path::Path;
use std::time::Instant;

use treeffuser::data::{dataset_from_table, format_cell, save_csv, ColumnKind, CsvTable};
use treeffuser::metrics::{
    crps_multivariate, default_mace_levels, mace, mae, newsvendor_order, newsvendor_profit, rmse, EvalReport,
};
use treeffuser::model::{load_model, save_model, train_with_report, SamplerConfig, TreeffuserConfig, TreeffuserModel};
use treeffuser::synth::{generate, SynthKind, SynthSpec};
use treeffuser::{rng, Matrix};

use crate::CliError;

pub struct EvalSettings {
    pub crps_samples: usize,
    pub mean_samples: usize,
    pub sampler: SamplerConfig,
}

pub fn synth(kind: SynthKind, n: usize, d_x: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let (d, _) = generate(&SynthSpec { kind, n, d_x, seed })?;
    save_csv(&d, out)?;
    eprintln!("wrote {} rows of {kind} to {}", d.n_rows(), out.display());
    Ok(())
}

pub fn train(data: &Path, response: &[String], cfg: &TreeffuserConfig, model_out: &Path) -> Result<(), CliError> {
    let table = CsvTable::read(data)?;
    let d = dataset_from_table(&table, response)?;
    let start = Instant::now();
    let (model, report) = train_with_report(&d, cfg)?;
    let elapsed = start.elapsed();
    save_model(&model, model_out)?;
    eprintln!(
        "trained on {} rows ({} training-table rows, {} validation-table rows)",
        d.n_rows(),
        report.train_table_rows,
        report.valid_table_rows
    );
    for (k, name) in model.response_names.iter().enumerate() {
        let loss = report.best_valid_loss[k].map_or("n/a".to_string(), |l| format!("{l:.6}"));
        eprintln!("  {name}: {} trees, best validation loss {loss}", report.trees_per_dim[k]);
    }
    eprintln!("wall time {:.3}s; model written to {}", elapsed.as_secs_f64(), model_out.display());
    Ok(())
}

pub fn sample(model_path: &Path, data: &Path, n_samples: usize, sc: &SamplerConfig, out: &Path) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let table = CsvTable::read(data)?;
    let xs = feature_matrix(&table, &model)?;
    let sets = model.sample_rows(&xs, n_samples, sc)?;
    let mut w = writer(out)?;
    let mut header = vec!["row".to_string(), "sample".to_string()];
    header.extend(model.response_names.iter().cloned());
    write_record(&mut w, out, &header)?;
    for (i, set) in sets.iter().enumerate() {
        for (s, draw) in set.draws.iter_rows().enumerate() {
            let mut rec = vec![i.to_string(), s.to_string()];
            rec.extend(draw.iter().map(|v| format_cell(*v)));
            write_record(&mut w, out, &rec)?;
        }
    }
    flush(w, out)?;
    eprintln!("wrote {n_samples} samples for each of {} rows to {}", sets.len(), out.display());
    Ok(())
}

pub fn eval(model_path: &Path, data: &Path, settings: &EvalSettings, out: &Path) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let table = CsvTable::read(data)?;
    let xs = feature_matrix(&table, &model)?;
    let ys = response_matrix(&table, &model)?;
    if xs.rows() == 0 {
        return Err(treeffuser::Error::EmptyDataset.into());
    }
    let truth: Vec<Vec<f64>> = ys.iter_rows().map(<[f64]>::to_vec).collect();

    let sets = model.sample_rows(&xs, settings.crps_samples, &settings.sampler)?;
    let crps = sets
        .iter()
        .zip(&truth)
        .map(|(s, y)| crps_multivariate(s, y))
        .sum::<treeffuser::Result<f64>>()?
        / sets.len() as f64;
    let mace = mace(&sets, &truth, &default_mace_levels())?;

    // point predictions come from a separate draw so they do not reuse the CRPS samples
    let mean_sc = SamplerConfig {
        seed: rng::mix(settings.sampler.seed, 1),
        ..settings.sampler
    };
    let means: Vec<f64> = model
        .sample_rows(&xs, settings.mean_samples, &mean_sc)?
        .iter()
        .flat_map(|s| s.mean())
        .collect();
    let report = EvalReport {
        crps,
        rmse: rmse(&means, ys.as_slice())?,
        mae: mae(&means, ys.as_slice())?,
        mace,
        n_test: xs.rows(),
    };
    let text = report.to_key_value();
    std::fs::write(out, &text).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    eprint!("{text}");
    Ok(())
}

pub fn newsvendor(
    model_path: &Path,
    data: &Path,
    price: f64,
    cost: f64,
    n_samples: usize,
    sc: &SamplerConfig,
    out: &Path,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    if model.d_y != 1 {
        return Err(CliError::Validation(format!(
            "newsvendor needs a single-response model, this one has {} responses",
            model.d_y
        )));
    }
    let table = CsvTable::read(data)?;
    let xs = feature_matrix(&table, &model)?;
    let demand = response_matrix(&table, &model)?;
    let sets = model.sample_rows(&xs, n_samples, sc)?;

    let mut w = writer(out)?;
    write_record(&mut w, out, ["row", "order", "demand", "profit", "cumulative_profit"])?;
    let mut cumulative = 0.0;
    for (i, set) in sets.iter().enumerate() {
        let order = newsvendor_order(&set.column(0), price, cost)?;
        let d = demand.get(i, 0);
        let profit = newsvendor_profit(order, d, price, cost);
        cumulative += profit;
        write_record(
            &mut w,
            out,
            &[i.to_string(), format_cell(order), format_cell(d), format_cell(profit), format_cell(cumulative)],
        )?;
    }
    flush(w, out)?;
    eprintln!("{} rows, cumulative profit {cumulative:.4}", sets.len());
    Ok(())
}

/// Feature columns by the model's feature names, or positionally when the
/// non-response columns have exactly the model's width.
fn feature_matrix(table: &CsvTable, model: &TreeffuserModel) -> Result<Matrix, CliError> {
    let by_name: Option<Vec<usize>> = model
        .feature_names
        .iter()
        .map(|n| table.headers.iter().position(|h| h == n))
        .collect();
    let columns = match by_name {
        Some(c) => c,
        None => {
            let rest: Vec<usize> = (0..table.headers.len())
                .filter(|&c| !model.response_names.contains(&table.headers[c]))
                .collect();
            if rest.len() != model.d_x {
                return Err(treeffuser::Error::DimensionMismatch {
                    expected: model.d_x,
                    got: rest.len(),
                }
                .into());
            }
            rest
        }
    };
    Ok(table.numeric(&columns, ColumnKind::Feature)?)
}

fn response_matrix(table: &CsvTable, model: &TreeffuserModel) -> Result<Matrix, CliError> {
    let columns = model
        .response_names
        .iter()
        .map(|n| table.column_index(n))
        .collect::<treeffuser::Result<Vec<_>>>()?;
    Ok(table.numeric(&columns, ColumnKind::Response)?)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_record<I, T>(w: &mut csv::Writer<std::fs::File>, path: &Path, rec: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(rec)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn flush(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

use oobrad::experiments::{self, Gate, Study};
use oobrad::metrics::{self, db, Bands};
use oobrad::scenario::{ChannelKindName, Scenario};
use oobrad::system::Transmitter;
use oobrad::Error;

use crate::output::{Csv, OutDir, Summary};
use crate::plot::{line_plot, Figure, Series};
use crate::Common;

pub enum Failure {
    Config(String),
    Gate(String),
    Run(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Run(_) => 1,
            Failure::Config(_) => 2,
            Failure::Gate(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Gate(m) | Failure::Run(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

pub struct Context {
    pub scenario: Scenario,
    pub out: OutDir,
}

impl Context {
    pub fn new(c: &Common) -> Result<Self, Failure> {
        let mut scenario = match &c.config {
            Some(p) => Scenario::load(p)?,
            None => Scenario::default(),
        };
        if let Some(seed) = c.seed {
            scenario.seed = seed;
        }
        if let Some(n) = c.mc_symbols {
            scenario.mc.symbols = n;
        }
        scenario.validate()?;
        if let Some(t) = c.threads {
            if t == 0 {
                return Err(Failure::Config("--threads must be positive".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| Failure::Run(e.to_string()))?;
        }
        Ok(Context {
            scenario,
            out: OutDir::create(&c.out)?,
        })
    }
}

fn plot(path: std::path::PathBuf, fig: &Figure) -> Result<(), Failure> {
    line_plot(&path, fig).map_err(Failure::Run)
}

fn require(sc: &Scenario, kind: ChannelKindName, verb: &str) -> Result<(), Failure> {
    if sc.channel.kind == kind {
        Ok(())
    } else {
        Err(Failure::Config(format!(
            "{verb} needs a {} scenario",
            match kind {
                ChannelKindName::Rayleigh => "rayleigh",
                ChannelKindName::Los => "los",
            }
        )))
    }
}

/// Mean in-band transmitted PSD, the 0 dB reference of the spectra.
fn in_band_reference(st: &Study) -> Result<f64, Failure> {
    let ib = Bands::new(st.bandwidth)?.in_band(&st.grid)?;
    Ok(st.s_tx[ib.clone()].iter().sum::<f64>() / ib.len() as f64)
}

const PSD_REFERENCE: &str = "dB reference: 0 dB = mean transmitted PSD S_tx(f) over the in-band [-B/2, B/2), realization-averaged";

fn scenario_comments(sc: &Scenario) -> Vec<String> {
    vec![
        format!(
            "scenario: antennas = {}, users = {}, channel = {:?}, realizations = {}, seed = {}",
            sc.antennas, sc.users, sc.channel.kind, sc.realizations, sc.seed
        ),
        format!("nfft = {}, oversampling = {}, rolloff = {}", sc.nfft, sc.pulse.oversampling, sc.pulse.rolloff),
    ]
}

fn psd_csv(st: &Study, values: &[f64], reference: f64, what: &str, sc: &Scenario) -> Csv {
    let mut comments = scenario_comments(sc);
    comments.insert(0, what.to_string());
    comments.push(PSD_REFERENCE.to_string());
    let refs: Vec<&str> = comments.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&refs, &["f_over_B", "f", "level_dB"]);
    for (b, v) in values.iter().enumerate() {
        let f = st.grid.freq(b);
        csv.row(&[f / st.bandwidth, f, db(v / reference)]);
    }
    csv
}

pub fn fig1(ctx: &Context) -> Result<(), Failure> {
    let sc = &ctx.scenario;
    require(sc, ChannelKindName::Rayleigh, "fig1")?;
    let st = experiments::run_study(sc, &[])?;
    let reference = in_band_reference(&st)?;
    let traces: [(&str, &str, &Vec<f64>); 4] = [
        ("psd_tx.csv", "transmitted PSD S_tx(f) = trace S(f)", &st.s_tx),
        ("psd_weakest_user.csv", "received PSD of the weakest served user", &st.weakest_user),
        ("psd_random_victim.csv", "received PSD of one random Rayleigh victim (realization 0)", &st.random_victim),
        ("psd_max.csv", "worst-case received PSD M * S_max(f)", &st.s_max),
    ];
    let m = st.antennas as f64;
    for (name, what, values) in traces {
        let scaled: Vec<f64> = if name == "psd_max.csv" {
            values.iter().map(|v| v * m).collect()
        } else {
            values.to_vec()
        };
        psd_csv(&st, &scaled, reference, what, sc).write(&ctx.out.file(name))?;
    }
    let series = |label, v: &[f64], scale: f64| Series {
        label,
        points: v
            .iter()
            .enumerate()
            .map(|(b, x)| (st.grid.freq(b) / st.bandwidth, db(x * scale / reference)))
            .collect(),
    };
    plot(
        ctx.out.file("fig1.svg"),
        &Figure {
            title: "Power spectral densities",
            x_label: "f / B",
            y_label: "PSD (dB, in-band S_tx = 0 dB)",
            y_range: Some((-60.0, 20.0)),
            series: vec![
                series("transmitted", &st.s_tx, 1.0),
                series("weakest user", &st.weakest_user, 1.0),
                series("random victim", &st.random_victim, 1.0),
                series("worst case", &st.s_max, m),
            ],
            markers: vec![-0.5, 0.5],
        },
    )?;
    let mut s = Summary::default();
    s.put("scenario", "fig1");
    s.put("realizations", st.records.len());
    s.num("weakest_user_in_band_gain_db", st.mean_weakest_gain_db());
    s.num("worst_case_adjacent_band_gain_db", st.mean_worst_case_band_gain_db());
    s.num("worst_case_adjacent_band_gain_per_bin_mean_db", st.mean_worst_case_bin_gain_db());
    s.num("aclr_tx_db", st.mimo_aclr_tx()?);
    s.num("mimo_aclr_db", st.mimo_aclr()?);
    s.write(&ctx.out.file("summary.txt"))?;
    print!("{}", s.text());
    Ok(())
}

pub fn fig2(ctx: &Context) -> Result<(), Failure> {
    let sc = &ctx.scenario;
    require(sc, ChannelKindName::Los, "fig2")?;
    let p = experiments::run_pattern_study(sc, &experiments::sweep_angles_deg(0.25))?;
    let r0 = &p.records[0];
    let comments = scenario_comments(sc);
    let mut refs: Vec<&str> = vec!["radiation pattern of realization 0: band powers toward a line-of-sight probe at each azimuth"];
    refs.extend(comments.iter().map(String::as_str));
    refs.push("dB reference: P_ib_dB relative to the transmitted in-band power, P_ob_dB relative to the transmitted adjacent-band power (max of both sides)");
    let users = format!(
        "user angles (deg): {}",
        r0.user_angles_deg.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>().join(" ")
    );
    refs.push(&users);
    let mut csv = Csv::new(&refs, &["angle_deg", "P_ib_dB", "P_ob_dB"]);
    for (i, a) in p.angles_deg.iter().enumerate() {
        csv.row(&[*a, r0.p_ib_db[i], r0.p_ob_db[i]]);
    }
    csv.write(&ctx.out.file("pattern.csv"))?;
    let pts = |v: &[f64]| p.angles_deg.iter().copied().zip(v.iter().copied()).collect();
    plot(
        ctx.out.file("fig2.svg"),
        &Figure {
            title: "Radiation pattern",
            x_label: "azimuth (deg)",
            y_label: "power relative to transmitted (dB)",
            y_range: Some((-40.0, 15.0)),
            series: vec![
                Series {
                    label: "in band",
                    points: pts(&r0.p_ib_db),
                },
                Series {
                    label: "adjacent band",
                    points: pts(&r0.p_ob_db),
                },
            ],
            markers: r0.user_angles_deg.clone(),
        },
    )?;
    let mut s = Summary::default();
    s.put("scenario", "fig2");
    s.put("realizations", p.records.len());
    s.num("adjacent_band_peak_db", p.mean_peak_db());
    s.num("adjacent_band_peak_db_realization0", r0.peak_db);
    s.num("adjacent_band_peak_angle_deg_realization0", r0.peak_angle_deg);
    s.num("max_peak_to_user_offset_deg", p.max_peak_offset_deg());
    s.num("worst_case_adjacent_band_gain_db", p.mean_band_gain_db());
    let ib: Vec<f64> = p.records.iter().flat_map(|r| r.user_in_band_db.iter().copied()).collect();
    s.num("in_band_gain_at_users_db", ib.iter().sum::<f64>() / ib.len() as f64);
    s.write(&ctx.out.file("summary.txt"))?;
    print!("{}", s.text());
    Ok(())
}

fn single_user(sc: &Scenario) -> Scenario {
    let mut one = sc.clone();
    one.users = 1;
    one.allocation.xi = None;
    one.allocation.pathloss = None;
    one.channel.angles_deg = one.channel.angles_deg.map(|a| a[..1].to_vec());
    one.sweep = Default::default();
    one
}

pub fn fig3(ctx: &Context) -> Result<(), Failure> {
    let sc = &ctx.scenario;
    let bw = sc.pulse()?.bandwidth();
    let freqs: Vec<f64> = sc.fig3.freqs_over_b.iter().map(|f| f * bw).collect();
    let mut s = Summary::default();
    s.put("scenario", "fig3");
    let mut series_store = Vec::new();
    for (tag, scen) in [(format!("K{}", sc.users), sc.clone()), ("K1".to_string(), single_user(sc))] {
        let st = experiments::run_study(&scen, &freqs)?;
        let comments = scenario_comments(&scen);
        let mut refs: Vec<&str> = vec!["empirical CCDF of the eigenvalues of S(f), pooled over realizations"];
        refs.extend(comments.iter().map(String::as_str));
        refs.push("dB reference: each eigenvalue relative to the mean eigenvalue S_tx(f)/M of its realization");
        let mut csv = Csv::new(&refs, &["f_over_B", "level_dB", "ccdf"]);
        for i in 0..freqs.len() {
            let c = st.ccdf(i);
            for (level, frac) in c.steps() {
                csv.row(&[c.freq / bw, level, frac]);
            }
            s.num(&format!("{tag}_ccdf_at_plus2db_f{}", sc.fig3.freqs_over_b[i]), c.fraction_at_least(2.0));
            s.num(&format!("{tag}_largest_eigenvalue_db_f{}", sc.fig3.freqs_over_b[i]), c.levels_db[0]);
            series_store.push((format!("{tag}, f = {}B", sc.fig3.freqs_over_b[i]), c.steps()));
        }
        csv.write(&ctx.out.file(&format!("ccdf_{tag}.csv")))?;
        s.num(&format!("{tag}_worst_case_adjacent_band_gain_db"), st.mean_worst_case_band_gain_db());
        if let Some(i) = freqs.iter().position(|f| *f == 0.0) {
            let gaps: Vec<f64> = st
                .records
                .iter()
                .filter(|r| r.eigenvalues[i].len() > scen.users)
                .map(|r| db(r.eigenvalues[i][scen.users - 1] / r.eigenvalues[i][scen.users]))
                .collect();
            if !gaps.is_empty() {
                s.num(&format!("{tag}_in_band_eigen_gap_db"), gaps.iter().sum::<f64>() / gaps.len() as f64);
            }
        }
    }
    plot(
        ctx.out.file("fig3.svg"),
        &Figure {
            title: "Eigenvalue CCDF",
            x_label: "eigenvalue relative to mean (dB)",
            y_label: "fraction at or above",
            y_range: Some((0.0, 1.0)),
            series: series_store
                .iter()
                .map(|(l, pts)| Series {
                    label: l,
                    points: pts.clone(),
                })
                .collect(),
            markers: vec![0.0],
        },
    )?;
    s.write(&ctx.out.file("summary.txt"))?;
    print!("{}", s.text());
    Ok(())
}

fn gate_table(gates: &[Gate]) -> Csv {
    let mut csv = Csv::new(
        &["analytical-versus-simulation gates; measured values in the units named by each gate"],
        &["gate", "measured", "limit", "pass"],
    );
    for g in gates {
        csv.text_row(&[
            format!("\"{}\"", g.name),
            format!("{:?}", g.measured),
            format!("{:?}", g.limit),
            g.pass.to_string(),
        ]);
    }
    csv
}

pub fn validate(ctx: &Context) -> Result<(), Failure> {
    let sc = &ctx.scenario;
    let mc = sc.mc_config()?;
    let gates = experiments::run_validate(sc, &mc)?;
    gate_table(&gates).write(&ctx.out.file("validation.csv"))?;
    let mut s = Summary::default();
    s.put("scenario", "validate");
    for (i, g) in gates.iter().enumerate() {
        s.num(&format!("gate{i}_measured"), g.measured);
        s.put(&format!("gate{i}_pass"), g.pass);
        println!("{} {} (measured {:.4}, limit {})", if g.pass { "PASS" } else { "FAIL" }, g.name, g.measured, g.limit);
    }
    let failed = gates.iter().filter(|g| !g.pass).count();
    s.put("failed_gates", failed);
    s.write(&ctx.out.file("summary.txt"))?;
    if failed > 0 {
        return Err(Failure::Gate(format!("{failed} validation gate(s) failed")));
    }
    Ok(())
}

pub fn aclr(ctx: &Context) -> Result<(), Failure> {
    let sc = &ctx.scenario;
    let rep = metrics::mimo_aclr(
        |r| sc.transmitter(r),
        |r| sc.single_antenna_transmitter(r),
        sc.realizations,
        &sc.victim_spec(),
        sc.victims,
        sc.seed,
        sc.nfft,
    )?;
    let comments = scenario_comments(sc);
    let mut refs: Vec<&str> = vec!["per-antenna ACLR_m from the realization-averaged antenna PSDs"];
    refs.extend(comments.iter().map(String::as_str));
    refs.push("dB reference: adjacent-band power relative to the same antenna's in-band power");
    let mut csv = Csv::new(&refs, &["antenna", "aclr_dB"]);
    for (m, a) in rep.aclr_per_antenna.iter().enumerate() {
        csv.row(&[m as f64, *a]);
    }
    csv.write(&ctx.out.file("aclr.csv"))?;
    let mut s = Summary::default();
    s.put("scenario", "aclr");
    s.put("realizations", rep.n_realizations);
    s.put("victims_per_realization", rep.n_victims);
    s.num("mimo_aclr_db", rep.mimo_aclr);
    s.num("mimo_aclr_tx_db", rep.mimo_aclr_tx);
    s.num("mean_per_antenna_aclr_db", rep.mean_per_antenna());
    s.num("single_antenna_aclr_db", rep.aclr_siso_equivalent);
    s.write(&ctx.out.file("summary.txt"))?;
    print!("{}", s.text());
    Ok(())
}

type Maker<'a> = Box<dyn Fn(usize) -> oobrad::Result<Transmitter> + 'a>;

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

pub fn sweep_c1(ctx: &Context) -> Result<(), Failure> {
    let sc = &ctx.scenario;
    let k = sc.users;
    let allocations = if sc.sweep.allocations.is_empty() {
        vec![vec![1.0; k], (1..=k).map(|i| i as f64).collect()]
    } else {
        sc.sweep.allocations.clone()
    };
    let pathlosses = if sc.sweep.pathlosses.is_empty() {
        vec![vec![1.0; k], (0..k).map(|i| 10f64.powf(-(i as f64) / k as f64)).collect()]
    } else {
        sc.sweep.pathlosses.clone()
    };
    let mut configs: Vec<(String, Maker)> = Vec::new();
    for xi in &allocations {
        for beta in &pathlosses {
            let mut v = sc.clone();
            v.allocation.xi = Some(xi.clone());
            v.allocation.pathloss = Some(beta.clone());
            v.validate()?;
            let label = format!("xi=[{}] beta=[{}]", fmt_list(xi), fmt_list(beta));
            configs.push((label, Box::new(move |r| v.transmitter(r))));
        }
    }
    let rep = metrics::c1_sweep(
        &configs,
        |r| sc.single_antenna_transmitter(r),
        sc.realizations,
        &sc.victim_spec(),
        sc.victims,
        sc.seed,
        sc.nfft,
    )?;
    let comments = scenario_comments(sc);
    let mut refs: Vec<&str> = vec!["MIMO-ACLR for each power allocation xi and user pathloss beta"];
    refs.extend(comments.iter().map(String::as_str));
    refs.push("dB reference: victim-averaged adjacent-band power relative to victim-averaged in-band power");
    let mut csv = Csv::new(&refs, &["configuration", "mimo_aclr_dB"]);
    for row in &rep.rows {
        csv.text_row(&[format!("\"{}\"", row.label), format!("{:?}", row.mimo_aclr)]);
    }
    csv.write(&ctx.out.file("sweep.csv"))?;
    let mut s = Summary::default();
    s.put("scenario", "sweep-c1");
    s.put("configurations", rep.rows.len());
    s.num("mimo_aclr_spread_db", rep.spread);
    s.write(&ctx.out.file("summary.txt"))?;
    print!("{}", s.text());
    Ok(())
}

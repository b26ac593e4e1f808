//! Synthetic app corpus for end-to-end runs.
//!
//! Malicious apps reach a critical API from an entry point, either directly
//! through helper chains, through a registered click listener, or across an
//! explicit or implicit intent. Benign apps run the same kind of filler code
//! but never reach a critical API and send no intents; some carry critical
//! calls in unreachable methods.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Label, Metadata};

const CRITICAL_CALLS: &[(&str, &str)] = &[
    (
        "Landroid/telephony/TelephonyManager;",
        "invoke-virtual {v5}, Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;",
    ),
    (
        "Landroid/telephony/SmsManager;",
        "invoke-virtual/range {v0 .. v5}, Landroid/telephony/SmsManager;->sendTextMessage(Ljava/lang/String;Ljava/lang/String;Ljava/lang/String;Landroid/app/PendingIntent;Landroid/app/PendingIntent;)V",
    ),
    (
        "Ljava/lang/Runtime;",
        "invoke-virtual {v5, v4}, Ljava/lang/Runtime;->exec(Ljava/lang/String;)Ljava/lang/Process;",
    ),
    (
        "Landroid/location/LocationManager;",
        "invoke-virtual {v5, v4}, Landroid/location/LocationManager;->getLastKnownLocation(Ljava/lang/String;)Landroid/location/Location;",
    ),
    (
        "Ljava/net/URL;",
        "invoke-virtual {v5}, Ljava/net/URL;->openConnection()Ljava/net/URLConnection;",
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub apps: usize,
    pub malicious_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            apps: 200,
            malicious_fraction: 0.5,
            seed: 0,
        }
    }
}

/// One generated app: manifest, smali files (relative path, text) and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthApp {
    pub name: String,
    pub manifest: String,
    pub smali: Vec<(String, String)>,
    pub meta: Metadata,
}

impl SynthApp {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let root = dir.join(&self.name);
        let write = |path: PathBuf, text: &str| -> Result<()> {
            if let Some(p) = path.parent() {
                fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
            }
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write(root.join("AndroidManifest.xml"), &self.manifest)?;
        for (rel, text) in &self.smali {
            write(root.join("smali").join(rel), text)?;
        }
        write(root.join("meta.json"), &serde_json::to_string_pretty(&self.meta)?)?;
        Ok(root)
    }
}

struct Gen {
    rng: ChaCha8Rng,
    pkg: String,
    label_id: usize,
}

impl Gen {
    fn cls(&self, name: &str) -> String {
        format!("L{}/{};", self.pkg, name)
    }

    fn filler(&mut self, min: usize, max: usize) -> Vec<String> {
        let n = self.rng.gen_range(min..=max);
        let mut out = Vec::with_capacity(n + 2);
        for _ in 0..n {
            let k = self.rng.gen_range(0..14);
            let line = match k {
                0 => format!("const/4 v0, {:#x}", self.rng.gen_range(0..8)),
                1 => format!("const/16 v1, {:#x}", self.rng.gen_range(0..200)),
                2 => "add-int/2addr v0, v1".to_string(),
                3 => format!("add-int/lit8 v2, v0, {:#x}", self.rng.gen_range(1..9)),
                4 => "mul-int v3, v2, v1".to_string(),
                5 => "move v4, v3".to_string(),
                6 => "int-to-long v2, v0".to_string(),
                7 => format!("const-string v4, \"s{}\"", self.rng.gen_range(0..50)),
                8 => "invoke-static {v4, v4}, Landroid/util/Log;->d(Ljava/lang/String;Ljava/lang/String;)I".to_string(),
                9 => "move-result v0".to_string(),
                10 => "new-instance v6, Ljava/lang/StringBuilder;".to_string(),
                11 => "invoke-direct {v6}, Ljava/lang/StringBuilder;-><init>()V".to_string(),
                12 => "sget-object v6, Ljava/lang/System;->out:Ljava/io/PrintStream;".to_string(),
                _ => {
                    self.label_id += 1;
                    format!("if-eqz v0, :cond_{}", self.label_id)
                }
            };
            out.push(line);
        }
        out
    }

    fn critical(&mut self) -> Vec<String> {
        let (ty, call) = CRITICAL_CALLS.choose(&mut self.rng).expect("non-empty table");
        vec![
            format!("new-instance v5, {ty}"),
            "const-string v4, \"payload\"".to_string(),
            call.to_string(),
        ]
    }
}

fn method(decl: &str, body: &[String]) -> String {
    let mut s = format!(".method public {decl}\n    .registers 8\n");
    let mut labels = Vec::new();
    for line in body {
        s.push_str("    ");
        s.push_str(line);
        s.push('\n');
        if let Some(l) = line.strip_prefix("if-eqz v0, :") {
            labels.push(l.to_string());
        }
    }
    for l in labels {
        s.push_str(&format!("    :{l}\n"));
    }
    s.push_str("    return-void\n.end method\n\n");
    s
}

fn class(name: &str, sup: &str, implements: &[&str], methods: &[String]) -> String {
    let mut s = format!(".class public {name}\n.super {sup}\n");
    for i in implements {
        s.push_str(&format!(".implements {i}\n"));
    }
    s.push_str(".source \"synth\"\n\n");
    for m in methods {
        s.push_str(m);
    }
    s
}

const ON_CREATE: &str = "onCreate(Landroid/os/Bundle;)V";

/// Generates app number `index`.
pub fn generate_app(index: usize, label: Label, seed: u64) -> SynthApp {
    let name = format!("app{index:04}");
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        pkg: format!("com/synth/{name}"),
        label_id: 0,
    };
    let main = g.cls("MainActivity");
    let helper = g.cls("Helper");
    let service = g.cls("SyncService");
    let receiver = g.cls("EventReceiver");
    let clicker = g.cls("ClickHandler");
    let action = format!("com.synth.{name}.PING");

    let helpers = g.rng.gen_range(2..=4);
    let mut helper_methods = Vec::new();
    let mut main_body = g.filler(30, 70);
    for k in 0..helpers {
        let mut body = g.filler(30, 70);
        if k + 1 < helpers && g.rng.gen_bool(0.5) {
            body.push(format!("invoke-static {{}}, {helper}->work{}()V", k + 1));
            body.extend(g.filler(0, 10));
        }
        helper_methods.push(method(&format!("static work{k}()V"), &body));
        if g.rng.gen_bool(0.7) {
            main_body.push(format!("invoke-static {{}}, {helper}->work{k}()V"));
            main_body.extend(g.filler(0, 10));
        }
    }

    let mut service_body = g.filler(20, 50);
    let mut receiver_body = g.filler(20, 50);
    let mut click_body = g.filler(20, 50);

    match label {
        Label::Malicious => {
            let variants = [0usize, 1, 2, 3];
            let count = g.rng.gen_range(1..=2);
            let chosen: Vec<usize> = variants.choose_multiple(&mut g.rng, count).copied().collect();
            for v in chosen {
                match v {
                    // entry → leak → leak2 → critical
                    0 => {
                        let mut l2 = g.filler(30, 60);
                        l2.extend(g.critical());
                        l2.extend(g.filler(0, 8));
                        helper_methods.push(method("static leak2()V", &l2));
                        let mut l1 = g.filler(30, 60);
                        l1.push(format!("invoke-static {{}}, {helper}->leak2()V"));
                        helper_methods.push(method("static leak()V", &l1));
                        main_body.push(format!("invoke-static {{}}, {helper}->leak()V"));
                    }
                    // click listener → critical
                    1 => {
                        click_body.extend(g.filler(40, 60));
                        click_body.extend(g.critical());
                        main_body.extend([
                            format!("new-instance v3, {clicker}"),
                            format!("invoke-direct {{v3}}, {clicker}-><init>()V"),
                            "const/4 v2, 0x0".to_string(),
                            "invoke-virtual {v2, v3}, Landroid/view/View;->setOnClickListener(Landroid/view/View$OnClickListener;)V"
                                .to_string(),
                        ]);
                    }
                    // explicit intent → service → critical
                    2 => {
                        service_body.extend(g.filler(40, 60));
                        service_body.extend(g.critical());
                        main_body.extend([
                            "new-instance v5, Landroid/content/Intent;".to_string(),
                            format!("const-class v6, {service}"),
                            "invoke-direct {v5, p0, v6}, Landroid/content/Intent;-><init>(Landroid/content/Context;Ljava/lang/Class;)V".to_string(),
                            format!("invoke-virtual {{p0, v5}}, {main}->startService(Landroid/content/Intent;)Landroid/content/ComponentName;"),
                        ]);
                    }
                    // implicit broadcast → receiver → critical
                    _ => {
                        receiver_body.extend(g.filler(40, 60));
                        receiver_body.extend(g.critical());
                        main_body.extend([
                            "new-instance v5, Landroid/content/Intent;".to_string(),
                            format!("const-string v6, \"{action}\""),
                            "invoke-direct {v5, v6}, Landroid/content/Intent;-><init>(Ljava/lang/String;)V".to_string(),
                            format!("invoke-virtual {{p0, v5}}, {main}->sendBroadcast(Landroid/content/Intent;)V"),
                        ]);
                    }
                }
                main_body.extend(g.filler(0, 10));
            }
        }
        Label::Benign => {
            // Same component plumbing as the malicious variants, minus the
            // critical call.
            if g.rng.gen_bool(0.5) {
                main_body.extend([
                    "new-instance v5, Landroid/content/Intent;".to_string(),
                    format!("const-class v6, {service}"),
                    "invoke-direct {v5, p0, v6}, Landroid/content/Intent;-><init>(Landroid/content/Context;Ljava/lang/Class;)V".to_string(),
                    format!("invoke-virtual {{p0, v5}}, {main}->startService(Landroid/content/Intent;)Landroid/content/ComponentName;"),
                ]);
            }
            if g.rng.gen_bool(0.5) {
                main_body.extend([
                    format!("new-instance v3, {clicker}"),
                    format!("invoke-direct {{v3}}, {clicker}-><init>()V"),
                    "const/4 v2, 0x0".to_string(),
                    "invoke-virtual {v2, v3}, Landroid/view/View;->setOnClickListener(Landroid/view/View$OnClickListener;)V"
                        .to_string(),
                ]);
            }
            // Critical calls only in code no entry point reaches.
            if g.rng.gen_bool(0.3) {
                let mut dead = g.filler(20, 40);
                dead.extend(g.critical());
                helper_methods.push(method("static unused()V", &dead));
            }
        }
    }

    let smali = vec![
        (
            format!("{}/MainActivity.smali", g.pkg),
            class(&main, "Landroid/app/Activity;", &[], &[method(ON_CREATE, &main_body)]),
        ),
        (
            format!("{}/Helper.smali", g.pkg),
            class(&helper, "Ljava/lang/Object;", &[], &helper_methods),
        ),
        (
            format!("{}/SyncService.smali", g.pkg),
            class(&service, "Landroid/app/Service;", &[], &[method("onCreate()V", &service_body)]),
        ),
        (
            format!("{}/EventReceiver.smali", g.pkg),
            class(
                &receiver,
                "Landroid/content/BroadcastReceiver;",
                &[],
                &[method("onReceive(Landroid/content/Context;Landroid/content/Intent;)V", &receiver_body)],
            ),
        ),
        (
            format!("{}/ClickHandler.smali", g.pkg),
            class(
                &clicker,
                "Ljava/lang/Object;",
                &["Landroid/view/View$OnClickListener;"],
                &[
                    method("constructor <init>()V", &[]),
                    method("onClick(Landroid/view/View;)V", &click_body),
                ],
            ),
        ),
    ];

    let java_pkg = g.pkg.replace('/', ".");
    let manifest = format!(
        r#"<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="{java_pkg}">
    <application android:label="{name}">
        <activity android:name=".MainActivity">
            <intent-filter>
                <action android:name="android.intent.action.MAIN"/>
                <category android:name="android.intent.category.LAUNCHER"/>
            </intent-filter>
        </activity>
        <service android:name=".SyncService"/>
        <receiver android:name=".EventReceiver">
            <intent-filter>
                <action android:name="{action}"/>
            </intent-filter>
        </receiver>
    </application>
</manifest>
"#
    );
    let day = g.rng.gen_range(0..1000u64);
    let date = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date") + Days::new(day);
    SynthApp {
        name,
        manifest,
        smali,
        meta: Metadata {
            timestamp: Some(date),
            label: Some(label),
        },
    }
}

/// Labels for a corpus of `cfg.apps` apps, shuffled with the seed.
pub fn corpus_labels(cfg: &SynthConfig) -> Vec<Label> {
    let n_mal = (cfg.apps as f64 * cfg.malicious_fraction).round() as usize;
    let mut labels: Vec<Label> = (0..cfg.apps)
        .map(|i| if i < n_mal { Label::Malicious } else { Label::Benign })
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    labels
}

/// Writes the whole corpus under `dir`, one directory per app.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> Result<Vec<PathBuf>> {
    corpus_labels(cfg)
        .into_iter()
        .enumerate()
        .map(|(i, label)| generate_app(i, label, cfg.seed).write(dir))
        .collect()
}

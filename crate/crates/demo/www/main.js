import init, { challenge_curve, synthetic_audit, welch_test } from "./pkg/conceptaudit_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (x, d = 3) => (Number.isFinite(x) ? x.toFixed(d) : String(x));

function showError(target, e) {
  $(target).innerHTML = `<p class="err">${String(e)}</p>`;
}

function drawCurve(canvas, curve) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 32;
  const x = (t) => pad + t * (w - 2 * pad);
  const y = (a) => h - pad - a * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "12px sans-serif";
  ctx.fillText("threshold", w / 2 - 24, h - 8);
  ctx.fillText("accuracy", 2, pad - 10);
  for (const v of [0, 0.5, 1]) {
    ctx.fillText(v.toFixed(1), x(v) - 8, h - pad + 14);
    ctx.fillText(v.toFixed(1), 6, y(v) + 4);
  }
  ctx.strokeStyle = "#ccc";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(x(0), y(0.5));
  ctx.lineTo(x(1), y(0.5));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillStyle = "rgba(200, 60, 60, 0.15)";
  ctx.strokeStyle = "#c33";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(x(0), y(0));
  curve.accuracy.forEach((acc, i) => {
    ctx.lineTo(x(curve.breakpoints[i]), y(acc));
    ctx.lineTo(x(curve.breakpoints[i + 1]), y(acc));
  });
  ctx.lineTo(x(1), y(0));
  ctx.fill();
  ctx.beginPath();
  curve.accuracy.forEach((acc, i) => {
    const move = i === 0 ? "moveTo" : "lineTo";
    ctx[move](x(curve.breakpoints[i]), y(acc));
    ctx.lineTo(x(curve.breakpoints[i + 1]), y(acc));
  });
  ctx.stroke();
  ctx.lineWidth = 1;
}

function drawScores(canvas, concept, random) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 32;
  const all = concept.concat(random);
  const lo = Math.min(0, ...all);
  const hi = Math.max(1e-9, ...all);
  const x = (v) => pad + ((v - lo) / (hi - lo)) * (w - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "12px sans-serif";
  ctx.fillText("TCAV mag per CAV: concept (top) vs random (bottom)", pad, 16);
  ctx.fillText(fmt(lo, 2), pad - 8, h - 8);
  ctx.fillText(fmt(hi, 2), w - pad - 16, h - 8);
  const rows = [
    [concept, h * 0.38, "#c33"],
    [random, h * 0.72, "#36c"],
  ];
  for (const [vals, cy, color] of rows) {
    ctx.fillStyle = color;
    vals.forEach((v, i) => {
      ctx.beginPath();
      ctx.arc(x(v), cy + ((i % 5) - 2) * 5, 4, 0, 2 * Math.PI);
      ctx.fill();
    });
  }
}

function testRow(name, t) {
  const star = t.significant ? " *" : "";
  return `${name}: concept ${fmt(t.mean_concept, 2)} (${fmt(t.sd_concept, 2)}), ` +
    `random ${fmt(t.mean_random, 2)} (${fmt(t.sd_random, 2)}), ` +
    `t = ${fmt(t.t_statistic)}, df = ${fmt(t.df, 1)}, p = ${t.p_value.toExponential(3)}${star}`;
}

function runSynthetic() {
  try {
    const r = JSON.parse(synthetic_audit(num("s-alpha"), num("s-beta"), num("s-noise"), num("s-p"), num("s-seed")));
    $("s-out").innerHTML = `<pre>${[
      testRow("TCAV dir", r.dir_test),
      testRow("TCAV mag", r.mag_test),
      `mean cosine(CAV, planted concept) = ${fmt(r.mean_cosine_to_planted)}`,
      `challenge AUC = ${fmt(r.curve.auc)}, False_Suff = ${fmt(r.curve.false_suff)}`,
    ].join("\n")}</pre>`;
    drawScores($("s-hist"), r.concept_mag, r.random_mag);
    drawCurve($("s-curve"), r.curve);
  } catch (e) {
    showError("s-out", e);
  }
}

function runCurve() {
  try {
    const c = JSON.parse(challenge_curve($("c-pos").value, $("c-neg").value));
    const note = c.balanced ? "" : " (unbalanced)";
    $("c-out").innerHTML = `<pre>n_pos = ${c.n_pos}, n_neg = ${c.n_neg}${note}\n` +
      `AUC = ${fmt(c.auc)}, False_Suff = ${fmt(c.false_suff)}</pre>`;
    drawCurve($("c-curve"), c);
  } catch (e) {
    showError("c-out", e);
  }
}

function runWelch() {
  try {
    const t = JSON.parse(welch_test($("w-a").value, $("w-b").value, num("w-alpha")));
    $("w-out").innerHTML = `<pre>${testRow("scores", t)}\nsignificant at alpha = ${t.alpha}: ${t.significant}</pre>`;
  } catch (e) {
    showError("w-out", e);
  }
}

await init();
$("s-run").addEventListener("click", runSynthetic);
$("c-run").addEventListener("click", runCurve);
$("w-run").addEventListener("click", runWelch);
runCurve();
runWelch();
runSynthetic();

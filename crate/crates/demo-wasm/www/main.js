import init, { annualize, demo_projection, salary_cost } from "./pkg/popchain_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#555"];

function fail(el, err) {
  el.textContent = String(err);
  el.className = "error";
}

function drawProjection(p) {
  const canvas = $("chart");
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 50;
  ctx.clearRect(0, 0, W, H);
  const series = [...p.categories, ["total", p.total]];
  const top = Math.max(...series.flatMap(([, b]) => b.p95), 1);
  const x = (i) => pad + (i * (W - 2 * pad)) / Math.max(p.years.length - 1, 1);
  const y = (v) => H - pad - (v / top) * (H - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, H - pad);
  ctx.lineTo(W - pad, H - pad);
  ctx.stroke();
  for (let k = 0; k <= 4; k++) {
    const v = (top * k) / 4;
    ctx.fillText(v.toFixed(0), 5, y(v) + 4);
  }
  p.years.forEach((yr, i) => {
    if (p.years.length <= 20 || i % 5 === 0) ctx.fillText(String(p.base_year + yr), x(i) - 14, H - pad + 16);
  });

  series.forEach(([name, b], k) => {
    const c = COLORS[k % COLORS.length];
    ctx.globalAlpha = 0.18;
    ctx.fillStyle = c;
    ctx.beginPath();
    b.p95.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
    for (let i = b.p05.length - 1; i >= 0; i--) ctx.lineTo(x(i), y(b.p05[i]));
    ctx.closePath();
    ctx.fill();
    ctx.globalAlpha = 1;
    ctx.strokeStyle = c;
    ctx.lineWidth = 2;
    ctx.beginPath();
    b.expected.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
    ctx.stroke();
    ctx.fillStyle = c;
    ctx.fillText(name === "total" ? "total" : `category ${name}`, W - pad - 90, pad + 16 * k);
  });
}

function runProjection() {
  const status = $("project-status");
  status.className = "";
  status.textContent = "working...";
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const p = JSON.parse(demo_projection(num("persons"), num("years"), num("iterations"), num("seed")));
      drawProjection(p);
      status.textContent = `population ${p.population}, base year ${p.base_year}, ${(performance.now() - t0).toFixed(0)} ms`;
    } catch (e) {
      fail(status, e);
    }
  }, 0);
}

function runAnnualize() {
  const out = $("annual");
  try {
    const monthly = $("monthly").value.trim().split("\n").map((l) => l.trim().split(/\s+/).map(Number));
    const a = JSON.parse(annualize(JSON.stringify({ monthly })));
    out.className = "";
    out.innerHTML = "<table>" + a.map((r) => "<tr>" + r.map((v) => `<td>${v.toFixed(6)}</td>`).join("") + "</tr>").join("") + "</table>";
  } catch (e) {
    fail(out, e);
  }
}

function runCost() {
  const out = $("cost-out");
  try {
    const req = {
      year: num("year"),
      base_salary: num("salary"),
      workload_hours: num("hours"),
      annuity: num("annuity") / 100,
      exclusive_dedication: num("exclusive") / 100,
      regime: $("regime").value,
    };
    const c = JSON.parse(salary_cost(JSON.stringify(req)));
    const fmt = (v) => v.toLocaleString(undefined, { maximumFractionDigits: 0 });
    out.className = "";
    out.textContent = `annual salary cost G = ${fmt(c.g)}, with employer charges GT = ${fmt(c.gt)}`;
  } catch (e) {
    fail(out, e);
  }
}

await init();
$("project").addEventListener("click", runProjection);
$("annualize").addEventListener("click", runAnnualize);
$("cost").addEventListener("click", runCost);
runAnnualize();
runCost();
runProjection();

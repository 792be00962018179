import init, { Demo } from "./pkg/corp_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let demo = null;

function status(msg) {
  $("status").textContent = msg ?? "";
}

function drawMap(values, size, dots) {
  const canvas = document.createElement("canvas");
  canvas.width = canvas.height = size;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(size, size);
  values.forEach((v, i) => {
    const g = Math.round(v * 255);
    img.data.set([g, g, g, 255], i * 4);
  });
  ctx.putImageData(img, 0, 0);
  ctx.fillStyle = "#e22";
  for (const [r, c] of dots ?? []) ctx.fillRect(c, r, 1, 1);
  return canvas;
}

function row(grid, label, cells) {
  const l = document.createElement("div");
  l.className = "label";
  l.textContent = label;
  grid.append(l, ...cells);
}

function render() {
  const n = demo.nImages, size = demo.size;
  const grid = document.createElement("div");
  grid.className = "grid";
  grid.style.gridTemplateColumns = `auto repeat(${n}, 74px)`;
  const all = (f) => Array.from({ length: n }, (_, i) => f(i));

  row(grid, "ground truth", all((i) => drawMap(demo.gt(i), size)));
  row(grid, "initial", all((i) => drawMap(demo.map(0, i), size)));
  for (let t = 1; t <= demo.iterations; t++) {
    const sel = demo.selected(t);
    const dots = all(() => []);
    for (let j = 0; j < sel.length; j += 3) dots[sel[j]].push([sel[j + 1], sel[j + 2]]);
    const purity = demo.purity(t);
    row(grid, `t = ${t}, purity ${(purity * 100).toFixed(1)}%`, all((i) => drawMap(demo.map(t, i), size, dots[i])));
  }
  $("maps").replaceChildren(grid);
}

function generate() {
  try {
    demo?.free();
    demo = new Demo(num("seed"), num("n"), num("d"), num("size"), num("sigma"), $("init").value, num("radius"), num("level"));
    $("run").disabled = false;
    $("evaluate").disabled = false;
    $("scores").replaceChildren();
    status();
    render();
  } catch (e) {
    demo = null;
    $("run").disabled = $("evaluate").disabled = true;
    status(String(e.message ?? e));
  }
}

function run() {
  try {
    demo.run(num("k"), num("iters"));
    status();
    render();
    if ($("scores").childElementCount) evaluate();
  } catch (e) {
    status(String(e.message ?? e));
  }
}

function evaluate() {
  const table = document.createElement("table");
  table.innerHTML = "<tr><th>maps</th><th>MAE</th><th>F max</th><th>F avg</th><th>S</th><th>E mean</th></tr>";
  for (let t = 0; t <= demo.iterations; t++) {
    const m = demo.metrics(t);
    const tr = table.insertRow();
    tr.insertCell().textContent = t === 0 ? "initial" : `t = ${t}`;
    for (const v of m) tr.insertCell().textContent = v.toFixed(4);
  }
  $("scores").replaceChildren(table);
}

await init();
$("generate").onclick = generate;
$("run").onclick = run;
$("evaluate").onclick = evaluate;
generate();

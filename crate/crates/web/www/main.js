import init, { Scene } from "./pkg/changecnn_web.js";

const $ = (id) => document.getElementById(id);
let scene = null;

function paint(id, rgba, w, h) {
  const canvas = $(id);
  canvas.width = w;
  canvas.height = h;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
}

function score(view) {
  const f = (v) => (Number.isFinite(v) ? v.toFixed(2) : "n/a");
  return `threshold ${view.threshold.toPrecision(4)}  overall ${f(view.overall)}%  ` +
    `change ${f(view.change)}%  no-change ${f(view.no_change)}%`;
}

function guarded(fn) {
  return () => {
    try {
      $("error").textContent = "";
      fn();
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

const generate = guarded(() => {
  scene?.free();
  scene = new Scene(Number($("seed").value) >>> 0, Number($("size").value));
  const { width: w, height: h } = scene;
  paint("earlier", scene.earlier(), w, h);
  paint("later", scene.later(), w, h);
  paint("truth", scene.truth(), w, h);
  baseline();
  vote();
});

const baseline = guarded(() => {
  const otsu = $("otsu").checked;
  $("threshold").disabled = otsu;
  const method = $("method").value;
  let view = scene.baseline(method, undefined);
  if (otsu) {
    $("threshold").value = (view.threshold - view.range_min) / (view.range_max - view.range_min || 1);
  } else {
    const t = view.range_min + Number($("threshold").value) * (view.range_max - view.range_min);
    view.free();
    view = scene.baseline(method, t);
  }
  paint("statistic", view.values(), scene.width, scene.height);
  paint("baseline-outcome", view.outcome(), scene.width, scene.height);
  $("baseline-score").textContent = score(view);
  view.free();
});

const vote = guarded(() => {
  const view = scene.vote(
    Number($("flip").value),
    Number($("confidence").value),
    Number($("stride").value),
    Number($("sigma").value),
    Number($("seed").value) >>> 0,
  );
  paint("probability", view.values(), scene.width, scene.height);
  paint("vote-outcome", view.outcome(), scene.width, scene.height);
  $("vote-score").textContent = score(view);
  view.free();
});

await init();
$("generate").addEventListener("click", generate);
for (const id of ["method", "otsu", "threshold"]) $(id).addEventListener("input", baseline);
for (const id of ["flip", "confidence", "stride", "sigma"]) $(id).addEventListener("input", vote);
generate();

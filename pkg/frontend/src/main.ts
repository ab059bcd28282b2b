import { ApiClient } from './api.js';
import { renderScene } from './canvas.js';
import {
  IDENTITY,
  ViewTransform,
  dragToBox,
  hitTest,
  pan,
  screenToImage,
  zoomAt,
} from './geometry.js';
import { ReviewViewModel } from './store.js';
import type { CaseScoreDto, CellClass } from './types.js';

const api = new ApiClient();
const vm = new ReviewViewModel(api, render);

let transform: ViewTransform = { ...IDENTITY };
let raster: HTMLImageElement | null = null;
let dragStart: [number, number] | null = null;
let dragCurrent: [number, number] | null = null;
let panning = false;

const el = {
  caseList: document.getElementById('case-list') as HTMLUListElement,
  imageGrid: document.getElementById('image-grid') as HTMLUListElement,
  canvas: document.getElementById('viewer') as HTMLCanvasElement,
  scorePanel: document.getElementById('score-panel') as HTMLDivElement,
  slider: document.getElementById('conf-slider') as HTMLInputElement,
  sliderValue: document.getElementById('conf-value') as HTMLSpanElement,
  showPositive: document.getElementById('show-positive') as HTMLInputElement,
  showNegative: document.getElementById('show-negative') as HTMLInputElement,
  toggleButton: document.getElementById('toggle-btn') as HTMLButtonElement,
  deleteButton: document.getElementById('delete-btn') as HTMLButtonElement,
  addPositive: document.getElementById('add-positive') as HTMLInputElement,
  commitDraft: document.getElementById('commit-draft') as HTMLButtonElement,
  discardDraft: document.getElementById('discard-draft') as HTMLButtonElement,
  status: document.getElementById('status') as HTMLDivElement,
  actor: document.getElementById('actor') as HTMLInputElement,
};

function ctx(): CanvasRenderingContext2D {
  return el.canvas.getContext('2d')!;
}

function fitImage(): void {
  if (!vm.image) return;
  const scale = Math.min(
    el.canvas.width / vm.image.width,
    el.canvas.height / vm.image.height,
  );
  transform = {
    scale,
    offsetX: (el.canvas.width - vm.image.width * scale) / 2,
    offsetY: (el.canvas.height - vm.image.height * scale) / 2,
  };
}

function loadRaster(imageId: string): void {
  raster = null;
  const img = new Image();
  img.onload = () => {
    raster = img;
    render();
  };
  img.src = api.rasterUrl(imageId);
}

function bandLegend(band: string): string {
  const legend = 'low < 5% | intermediate 5-30% | high > 30%';
  return `<span class="band band-${band}">${band.toUpperCase()}</span> <small>(${legend})</small>`;
}

function scoreHtml(score: CaseScoreDto | null, warnings: string[], whatIf: boolean): string {
  if (!score) {
    return `<p class="warning">No scorable detections.</p>${warnings
      .map((w) => `<p class="warning">${w}</p>`)
      .join('')}`;
  }
  const hotspots = score.hotspots
    .map(
      (h) =>
        `<tr class="${h.image_id === vm.image?.image_id ? 'current' : ''}">
          <td>${h.image_id}</td><td>${h.index_percent.toFixed(2)}%</td>
          <td>${h.n_pos} / ${h.n_neg}</td></tr>`,
    )
    .join('');
  const adequacy = score.adequate
    ? `<p>${score.total_cells} cells counted (adequate)</p>`
    : `<p class="warning">Only ${score.total_cells} cells counted; guidelines ask for at least 500.</p>`;
  return `
    ${whatIf ? '<p class="what-if">preview at slider threshold (not saved)</p>' : ''}
    <h3>${score.case_id}: ${score.index_percent.toFixed(2)}%</h3>
    <p>${bandLegend(score.band)}</p>
    ${adequacy}
    <table><thead><tr><th>hotspot</th><th>index</th><th>pos / neg</th></tr></thead>
    <tbody>${hotspots}</tbody></table>
    ${warnings.map((w) => `<p class="warning">${w}</p>`).join('')}
  `;
}

function render(): void {
  el.caseList.innerHTML = vm.cases
    .map((c) => {
      const selected = vm.currentCaseId() === c.case_id ? 'selected' : '';
      const index = c.score ? `${c.score.index_percent.toFixed(1)}%` : 'n/a';
      return `<li class="${selected}" data-case="${c.case_id}">
        ${c.case_id} <small>${c.n_images} images, ${index}</small></li>`;
    })
    .join('');

  el.imageGrid.innerHTML = (vm.selectedCase?.images ?? [])
    .map((img) => {
      const selected = vm.image?.image_id === img.image_id ? 'selected' : '';
      return `<li class="${selected}" data-image="${img.image_id}">
        ${img.image_id} <small>v${img.version}, ${img.n_detections} cells</small></li>`;
    })
    .join('');

  if (vm.scoreView) {
    el.scorePanel.innerHTML = scoreHtml(
      vm.scoreView.payload.score,
      vm.scoreView.payload.warnings,
      vm.scoreView.whatIf,
    );
  } else {
    el.scorePanel.innerHTML = '<p>Select a case.</p>';
  }

  el.sliderValue.textContent = vm.slider.toFixed(2);
  el.status.textContent = vm.status;
  const hasSelection = vm.selectedIndex !== null;
  el.toggleButton.disabled = !hasSelection;
  el.deleteButton.disabled = !hasSelection;
  el.commitDraft.disabled = vm.draft === null;
  el.discardDraft.disabled = vm.draft === null;

  const detections = vm.visibleDetections();
  let draft = vm.draft;
  if (dragStart && dragCurrent && vm.image) {
    draft = dragToBox(
      dragStart[0], dragStart[1], dragCurrent[0], dragCurrent[1],
      vm.image.width, vm.image.height,
    );
  }
  renderScene(ctx(), {
    image: raster,
    detections,
    selectedIndex: vm.selectedIndex,
    draft,
    draftClass: el.addPositive.checked ? 0 : 1,
    transform,
  });
}

el.caseList.addEventListener('click', (event) => {
  const item = (event.target as HTMLElement).closest('li');
  if (item?.dataset.case) void vm.openCase(item.dataset.case);
});

el.imageGrid.addEventListener('click', (event) => {
  const item = (event.target as HTMLElement).closest('li');
  if (item?.dataset.image) {
    void vm.openImage(item.dataset.image).then(() => {
      fitImage();
      loadRaster(item.dataset.image!);
      render();
    });
  }
});

el.canvas.addEventListener('mousedown', (event) => {
  if (!vm.image) return;
  const rect = el.canvas.getBoundingClientRect();
  const sx = event.clientX - rect.left;
  const sy = event.clientY - rect.top;
  if (event.shiftKey || event.button === 1) {
    panning = true;
    dragStart = [sx, sy];
    return;
  }
  const [ix, iy] = screenToImage(transform, sx, sy);
  const hit = hitTest(vm.visibleDetections(), ix, iy);
  if (hit) {
    vm.select(hit.index);
  } else {
    dragStart = [ix, iy];
    dragCurrent = null;
    vm.select(null);
  }
});

el.canvas.addEventListener('mousemove', (event) => {
  const rect = el.canvas.getBoundingClientRect();
  const sx = event.clientX - rect.left;
  const sy = event.clientY - rect.top;
  if (panning && dragStart) {
    transform = pan(transform, sx - dragStart[0], sy - dragStart[1]);
    dragStart = [sx, sy];
    render();
    return;
  }
  if (dragStart && vm.image) {
    dragCurrent = screenToImage(transform, sx, sy);
    render();
  }
});

window.addEventListener('mouseup', () => {
  if (panning) {
    panning = false;
    dragStart = null;
    return;
  }
  if (dragStart && dragCurrent && vm.image) {
    const box = dragToBox(
      dragStart[0], dragStart[1], dragCurrent[0], dragCurrent[1],
      vm.image.width, vm.image.height,
    );
    if (box) {
      vm.beginDraft(box, (el.addPositive.checked ? 0 : 1) as CellClass);
    }
  }
  dragStart = null;
  dragCurrent = null;
  render();
});

el.canvas.addEventListener('wheel', (event) => {
  event.preventDefault();
  const rect = el.canvas.getBoundingClientRect();
  const factor = event.deltaY < 0 ? 1.15 : 1 / 1.15;
  transform = zoomAt(transform, event.clientX - rect.left, event.clientY - rect.top, factor);
  render();
});

el.slider.addEventListener('input', () => {
  void vm.setSlider(Number(el.slider.value));
});

el.showPositive.addEventListener('change', () => vm.setVisibility(0, el.showPositive.checked));
el.showNegative.addEventListener('change', () => vm.setVisibility(1, el.showNegative.checked));
el.toggleButton.addEventListener('click', () => void vm.toggleSelected());
el.deleteButton.addEventListener('click', () => void vm.deleteSelected());
el.commitDraft.addEventListener('click', () => void vm.commitDraft());
el.discardDraft.addEventListener('click', () => vm.clearDraft());
el.actor.addEventListener('change', () => {
  vm.actor = el.actor.value || 'reviewer';
});

window.addEventListener('keydown', (event) => {
  if (event.target instanceof HTMLInputElement) return;
  if (event.key === 't') void vm.toggleSelected();
  if (event.key === 'd' || event.key === 'Delete') void vm.deleteSelected();
  if (event.key === 'Escape') vm.clearDraft();
});

void vm.loadCases();
render();

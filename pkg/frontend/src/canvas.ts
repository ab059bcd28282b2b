import type { ViewTransform } from './geometry.js';
import type { BoxDto, CellClass, DetectionDto } from './types.js';

// Colors follow the clinical display convention: positive red, negative green.
export const CLASS_COLORS: Record<CellClass, string> = {
  0: '#ff0000',
  1: '#00cc22',
};

export interface RenderInputs {
  image: HTMLImageElement | null;
  detections: DetectionDto[];
  selectedIndex: number | null;
  draft: BoxDto | null;
  draftClass: CellClass;
  transform: ViewTransform;
}

export function renderScene(ctx: CanvasRenderingContext2D, inputs: RenderInputs): void {
  const { canvas } = ctx;
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.fillStyle = '#1c1c22';
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  const t = inputs.transform;
  ctx.setTransform(t.scale, 0, 0, t.scale, t.offsetX, t.offsetY);
  ctx.imageSmoothingEnabled = t.scale < 1;

  if (inputs.image) {
    ctx.drawImage(inputs.image, 0, 0);
  }

  const strokeWidth = 2 / t.scale;
  for (const d of inputs.detections) {
    ctx.strokeStyle = CLASS_COLORS[d.cls];
    ctx.lineWidth = d.index === inputs.selectedIndex ? strokeWidth * 2.5 : strokeWidth;
    ctx.strokeRect(
      d.box.x_min,
      d.box.y_min,
      d.box.x_max - d.box.x_min,
      d.box.y_max - d.box.y_min,
    );
    if (d.provenance === 'human') {
      ctx.save();
      ctx.setLineDash([4 / t.scale, 3 / t.scale]);
      ctx.strokeStyle = '#ffffff';
      ctx.lineWidth = strokeWidth / 2;
      ctx.strokeRect(
        d.box.x_min - 2 / t.scale,
        d.box.y_min - 2 / t.scale,
        d.box.x_max - d.box.x_min + 4 / t.scale,
        d.box.y_max - d.box.y_min + 4 / t.scale,
      );
      ctx.restore();
    }
  }

  if (inputs.draft) {
    ctx.save();
    ctx.setLineDash([6 / t.scale, 4 / t.scale]);
    ctx.strokeStyle = CLASS_COLORS[inputs.draftClass];
    ctx.lineWidth = strokeWidth;
    ctx.strokeRect(
      inputs.draft.x_min,
      inputs.draft.y_min,
      inputs.draft.x_max - inputs.draft.x_min,
      inputs.draft.y_max - inputs.draft.y_min,
    );
    ctx.restore();
  }
}

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_codeIds: (a: number) => [number, number];
export const demo_heatmapHeight: (a: number) => number;
export const demo_heatmapWidth: (a: number) => number;
export const demo_imageHeight: (a: number) => number;
export const demo_imageWidth: (a: number) => number;
export const demo_loadBundle: (a: number, b: number, c: number) => [number, number];
export const demo_loadLatents: (a: number, b: number, c: number) => [number, number, number];
export const demo_new: (a: number) => [number, number, number];
export const demo_render: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demo_sceneHeatmap: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const heatmapLoss: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
export const privacyView: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;

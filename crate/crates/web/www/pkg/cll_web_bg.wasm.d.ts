/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_clean: (a: number) => [number, number];
export const demo_denoise: (a: number, b: number) => [number, number, number, number];
export const demo_denoise_ramp: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_finished: (a: number) => number;
export const demo_last_psnr: (a: number) => number;
export const demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const demo_noisy: (a: number) => [number, number];
export const demo_noisy_psnr: (a: number) => number;
export const demo_phase: (a: number) => number;
export const demo_set_sigma: (a: number, b: number) => [number, number];
export const demo_size: (a: number) => number;
export const demo_status: (a: number) => [number, number];
export const demo_steps_done: (a: number) => number;
export const demo_steps_total: (a: number) => number;
export const demo_train: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;

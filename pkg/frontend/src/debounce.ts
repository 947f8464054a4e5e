/**
 * Wrap `fn` so rapid calls collapse into one invocation `waitMs` after the
 * last call. The wrapper keeps the latest arguments and exposes `cancel()`
 * to drop a pending invocation without firing it.
 */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): ((...args: A) => void) & { cancel(): void } {
  let timer: ReturnType<typeof setTimeout> | null = null;

  const wrapped = (...args: A) => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      fn(...args);
    }, waitMs);
  };

  wrapped.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
  };

  return wrapped;
}

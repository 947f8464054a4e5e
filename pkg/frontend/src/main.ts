import { initExplorer } from './ui.js';

const root = document.querySelector<HTMLDivElement>('#app');
if (root !== null) {
  void initExplorer(root);
}
